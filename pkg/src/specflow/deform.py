"""Deformations that separate two adjacent eigenvalue branches, and the
obstruction to doing so over a 2-sphere.

``flatten`` collapses the pair ``(mu_n, mu_{n+1})`` to a double eigenvalue
over a region, using a monotone piecewise-linear function of the operator.
``rank_one_push`` then lifts one line of the double eigenspace halfway to
``mu_{n+2}``. Over a 1-complex a line field on the region always extends
inward; over a sphere the lower eigenline bundle may have a nonzero Chern
number, in which case no separation exists.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ExtensionFailed, FieldMisaligned, FluxSaturation, IndexCollision
from .exhaustion import (
    Exhaustion,
    FlowObstruction,
    GapSection,
    exhaust,
    relabel,
)
from .families import SampledFamily, sample_matrices
from .hermitian import HermitianOperator, PiecewiseLinear, functional_calculus, op_norm
from .spaces import ParameterComplex, star_cover
from .spectral import GraphComponent, SpectralGraphData, spectral_graph

MONOTONE_SLACK = 1e-9
FLUX_LIMIT = 0.9 * math.pi


# ------------------------------------------------------------------ regions

@dataclass(frozen=True, eq=False)
class Region:
    inner: frozenset[int]
    outer: frozenset[int]
    bump: np.ndarray

    def __post_init__(self):
        if not self.inner <= self.outer:
            raise ValueError("inner must be contained in outer")


def _distances(space: ParameterComplex, sources: frozenset[int]) -> np.ndarray:
    d = np.full(space.n_vertices, np.inf)
    queue = deque()
    for v in sources:
        d[v] = 0
        queue.append(v)
    while queue:
        u = queue.popleft()
        for w in space.neighbors[u]:
            if d[w] == np.inf:
                d[w] = d[u] + 1
                queue.append(w)
    return d


def make_region(space: ParameterComplex, inner, rings: int = 1, outer=None) -> Region:
    """``outer`` defaults to ``inner`` plus ``rings`` graph layers; the bump
    is ``d_out / (d_in + d_out)`` in graph distance, 1 on inner, 0 off outer."""
    inner = frozenset(int(v) for v in inner)
    d_in = _distances(space, inner)
    outer = frozenset(int(v) for v in np.flatnonzero(d_in <= rings)) if outer is None else frozenset(outer)
    rest = frozenset(range(space.n_vertices)) - outer
    if not rest:
        bump = np.where(np.isfinite(d_in), 1.0, 0.0)
        bump[list(outer)] = 1.0
        return Region(inner, outer, bump)
    d_out = _distances(space, rest)
    bump = np.zeros(space.n_vertices)
    for v in outer:
        bump[v] = 1.0 if v in inner else d_out[v] / (d_in[v] + d_out[v])
    return Region(inner, outer, bump)


# ------------------------------------------------------------- deformations

@dataclass(frozen=True, eq=False)
class DeformationResult:
    family: SampledFamily
    original: SampledFamily
    changed: frozenset[int]
    deltas: Mapping[int, np.ndarray]
    report: list

    def homotopy(self, t: float) -> tuple[HermitianOperator, ...]:
        """Samples of ``D + t (D~ - D)``; the endpoints are the original and deformed objects."""
        if t == 0:
            return self.original.samples
        if t == 1:
            return self.family.samples
        return tuple(
            HermitianOperator(D.entries + t * self.deltas[v]) if v in self.deltas else D
            for v, D in enumerate(self.original.samples)
        )

    def to_json(self) -> str:
        return json.dumps({"changed": sorted(self.changed), "vertices": self.report}, sort_keys=True)


def _pair_positions(e: Exhaustion, v: int, n: int) -> tuple[int, int]:
    return e.position(v, n), e.position(v, n + 1)


def _neighbours(e: Exhaustion, v: int, n: int, context: Mapping | None) -> tuple[float, float, float, float]:
    """``(mu_{n-1}, mu_n, mu_{n+1}, mu_{n+2})`` at ``v``, with virtual outer
    values one unit away when the spectrum stops."""
    w = e.graph.per_sample[v].eigenvalues
    p0, p1 = _pair_positions(e, v, n)
    m0, m1 = float(w[p0]), float(w[p1])
    context = context or {}
    if "below" in context:
        mlo = float(np.asarray(context["below"])[v]) if np.ndim(context["below"]) else float(context["below"])
    else:
        mlo = float(w[p0 - 1]) if p0 - 1 >= 0 else m0 - 1.0
    if "above" in context:
        mhi = float(np.asarray(context["above"])[v]) if np.ndim(context["above"]) else float(context["above"])
    else:
        mhi = float(w[p1 + 1]) if p1 + 1 < len(w) else m1 + 1.0
    return mlo, m0, m1, mhi


def _summary(s: SampledFamily, v: int, lo: float, hi: float) -> list:
    c = s.spectra[v]
    return [[round(float(x), 12), int(m)] for x, m in zip(c.values, c.multiplicities) if lo <= x <= hi]


def _finish(s: SampledFamily, new_mats: list, deltas: dict, region: Region, ranges: dict) -> DeformationResult:
    new = sample_matrices(s.space, new_mats, continuity=s.continuity, trusted_window=s.trusted_window,
                          cluster_tol=s.cluster_tol, family=None)
    for v in range(s.space.n_vertices):
        if v not in region.outer and new.samples[v] is not s.samples[v]:
            raise AssertionError("deformation touched a vertex outside the region")
        drop = s.spectra[v].eigenvalues - new.spectra[v].eigenvalues
        if np.any(drop > MONOTONE_SLACK):
            raise AssertionError(f"deformation lowered an eigenvalue at vertex {v} by {drop.max():.3e}")
    report = [{"vertex": v, "bump": round(float(region.bump[v]), 12),
               "before": _summary(s, v, *ranges[v]), "after": _summary(new, v, *ranges[v])}
              for v in sorted(deltas)]
    return DeformationResult(new, s, frozenset(deltas), deltas, report)


def flatten(s: SampledFamily, e: Exhaustion, region: Region, n: int = 0,
            context: Mapping | None = None) -> DeformationResult:
    """``D + phi (h(D) - D)`` with ``h`` identity outside ``[mu_{n-1}, mu_{n+1}]``,
    constant ``mu_{n+1}`` on ``[mu_n, mu_{n+1}]`` and linear in between.

    ``h(t) >= t`` and ``h`` is nondecreasing, so every eigenvalue moves up and
    the order is kept. Where ``phi = 1`` the pair becomes one double eigenvalue.
    ``context`` may supply ``below``/``above`` values for missing neighbours.
    """
    tol = s.cluster_tol
    mats = list(s.samples)
    deltas, ranges = {}, {}
    for v in sorted(region.outer):
        phi = float(region.bump[v])
        mlo, m0, m1, mhi = _neighbours(e, v, n, context)
        if m0 - mlo <= tol or mhi - m1 <= tol:
            raise IndexCollision(f"pair {n} touches a neighbouring branch at vertex {v}")
        if phi == 0.0:
            continue
        if m1 - m0 <= tol:
            h = PiecewiseLinear([mlo, m1], [mlo, m1], left_slope=1.0, right_slope=1.0)
        else:
            h = PiecewiseLinear([mlo, m0, m1], [mlo, m1, m1], left_slope=1.0, right_slope=1.0)
        D = s.samples[v]
        hD = functional_calculus(D, h, eig=s.spectra[v].eig)
        delta = phi * (hD.entries - D.entries)
        mats[v] = HermitianOperator(D.entries + delta)
        deltas[v] = delta
        ranges[v] = (mlo - tol, mhi + tol)
    return _finish(s, mats, deltas, region, ranges)


def _check_projector(P: np.ndarray, v: int) -> None:
    if (op_norm(P - P.conj().T) > 1e-9 or op_norm(P @ P - P) > 1e-9
            or abs(np.trace(P).real - 1) > 1e-9):
        raise FieldMisaligned(f"field at vertex {v} is not a rank-one orthogonal projector")


def rank_one_push(s: SampledFamily, field: Mapping[int, np.ndarray], e: Exhaustion, region: Region,
                  n: int = 0, context: Mapping | None = None, align_tol: float = 1e-6) -> DeformationResult:
    """``D + phi alpha P`` with ``alpha = (mu_{n+2} - mu_{n+1}) / 2``.

    On inner vertices ``P`` must lie in the pair eigenspace; the pushed line
    then lands midway between ``mu_{n+1}`` and ``mu_{n+2}``.
    """
    mats = list(s.samples)
    deltas, ranges = {}, {}
    for v in sorted(region.outer):
        phi = float(region.bump[v])
        if phi == 0.0:
            continue
        if v not in field:
            raise FieldMisaligned(f"no projector given at vertex {v}")
        P = np.asarray(field[v], dtype=complex)
        _check_projector(P, v)
        mlo, m0, m1, mhi = _neighbours(e, v, n, context)
        vecs = s.spectra[v].eig.eigenvectors[:, list(_pair_positions(e, v, n))]
        Q = vecs @ vecs.conj().T
        miss = op_norm(P - Q @ P)
        if v in region.inner and miss > align_tol:
            raise FieldMisaligned(f"field leaves the pair eigenspace at vertex {v} (by {miss:.2e})")
        alpha = phi * (mhi - m1) / 2
        D = s.samples[v]
        delta = alpha * P
        mats[v] = HermitianOperator(D.entries + delta)
        deltas[v] = delta
        ranges[v] = (mlo - s.cluster_tol, mhi + s.cluster_tol)
    return _finish(s, mats, deltas, region, ranges)


# ------------------------------------------------------------ chern number

def _line_chern(space: ParameterComplex, vectors: np.ndarray) -> int:
    """First Chern number of the line field ``vectors[v]`` over a closed surface.

    Each plaquette contributes the argument of the product of link overlaps
    around it, corners taken counterclockwise as seen from outside.
    """
    if not space.plaquettes:
        raise ValueError("Chern number needs a closed surface with plaquettes")
    total = 0.0
    for plaq in space.plaquettes:
        prod = 1.0 + 0j
        for a, b in zip(plaq, plaq[1:] + plaq[:1]):
            prod *= np.vdot(vectors[a], vectors[b])
        if abs(prod) < 1e-12:
            raise FluxSaturation(f"eigenline nearly orthogonal across plaquette {plaq}")
        flux = float(np.angle(prod))
        if abs(flux) >= FLUX_LIMIT:
            raise FluxSaturation(f"plaquette {plaq} carries flux {flux:.3f}; refine the grid")
        total += flux
    c = total / (2 * math.pi)
    if abs(c - round(c)) > 1e-6:
        raise FluxSaturation(f"total flux {c:.6f} is not an integer")
    return int(round(c))


def chern_number(g: SpectralGraphData, comp: GraphComponent) -> int:
    """Chern number of a one-sheet, multiplicity-one component's eigenline bundle.

    Sign convention: with counterclockwise plaquettes seen from outside, the
    lower band of ``k.sigma`` over the unit sphere gives -1.
    """
    if not (comp.is_covering and comp.sheet_count == 1 and set(comp.multiplicity_profile.values()) == {1}):
        raise ValueError("chern_number needs a one-sheet, multiplicity-one covering component")
    vecs = []
    for v in range(g.space.n_vertices):
        (k,) = comp.clusters_at(v)
        vecs.append(g.per_sample[v].cluster(k).vectors[:, 0])
    return _line_chern(g.space, np.array(vecs))


def position_chern(s: SampledFamily, positions: Sequence[int]) -> int:
    vecs = np.array([s.spectra[v].eig.eigenvectors[:, positions[v]] for v in range(s.space.n_vertices)])
    return _line_chern(s.space, vecs)


# ------------------------------------------------------ line field extension

def _polar(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return u @ vh


def _bloch(c: np.ndarray) -> np.ndarray:
    c = c / np.linalg.norm(c)
    z = np.conj(c[0]) * c[1]
    return np.array([2 * z.real, 2 * z.imag, abs(c[0]) ** 2 - abs(c[1]) ** 2])


def _from_bloch(n: np.ndarray) -> np.ndarray:
    n = n / np.linalg.norm(n)
    theta = math.acos(max(-1.0, min(1.0, n[2])))
    phi = math.atan2(n[1], n[0])
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    cos = float(np.clip(a @ b, -1.0, 1.0))
    if cos > 1 - 1e-14:
        return a
    if cos < -1 + 1e-12:
        # antipodal: any great circle works
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return math.cos(math.pi * t) * a + math.sin(math.pi * t) * perp
    ang = math.acos(cos)
    return (math.sin((1 - t) * ang) * a + math.sin(t * ang) * b) / math.sin(ang)


def _extend_component(space: ParameterComplex, comp: set[int], known: Mapping[int, np.ndarray],
                      pair_space: Callable[[int], np.ndarray]) -> dict[int, np.ndarray]:
    """Unit vectors spanning a line in the pair space at each vertex of ``comp``,
    agreeing with the ``known`` lines on the adjacent boundary."""
    boundary = sorted({w for v in comp for w in space.neighbors[v] if w in known and w not in comp})
    verts = comp | set(boundary)
    root = boundary[0] if boundary else min(comp)
    frames = {root: pair_space(root)}
    order, parent = [root], {root: None}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w in space.neighbors[u]:
            if w in verts and w not in frames and (u in comp or w in comp):
                q = pair_space(w)
                frames[w] = _polar(q @ (q.conj().T @ frames[u]))
                parent[w] = u
                order.append(w)
                queue.append(w)
    one_dim = space.dimension == 1
    bl = {b: _bloch(frames[b].conj().T @ known[b]) for b in boundary if b in frames}
    inner = sorted(comp)
    if not bl:
        # closed component: use a fixed line of the holonomy around a non-tree edge
        c = np.array([1.0, 0.0], dtype=complex)
        for u in inner:
            for w in space.neighbors[u]:
                if w in comp and parent.get(w) != u and parent.get(u) != w:
                    q = pair_space(w)
                    hol = frames[w].conj().T @ _polar(q @ (q.conj().T @ frames[u]))
                    c = np.linalg.eig(hol)[1][:, 0]
                    break
            else:
                continue
            break
        return {v: frames[v] @ c for v in inner}
    if one_dim and len(bl) <= 2:
        ends = list(bl)
        if len(ends) == 1:
            return {v: frames[v] @ _from_bloch(bl[ends[0]]) for v in inner}
        d0 = _restricted_distance(space, verts, ends[0])
        d1 = _restricted_distance(space, verts, ends[1])
        return {v: frames[v] @ _from_bloch(_slerp(bl[ends[0]], bl[ends[1]], d0[v] / (d0[v] + d1[v])))
                for v in inner}
    # harmonic extension of Bloch vectors with Dirichlet data on the boundary
    idx = {v: i for i, v in enumerate(inner)}
    lap = np.zeros((len(inner), len(inner)))
    rhs = np.zeros((len(inner), 3))
    for v in inner:
        i = idx[v]
        for w in space.neighbors[v]:
            if w in idx:
                lap[i, i] += 1
                lap[i, idx[w]] -= 1
            elif w in bl:
                lap[i, i] += 1
                rhs[i] += bl[w]
    sol = np.linalg.solve(lap, rhs)
    norms = np.linalg.norm(sol, axis=1)
    if norms.min() < 1e-3:
        raise ExtensionFailed("harmonic extension of the eigenline field degenerates")
    return {v: frames[v] @ _from_bloch(sol[idx[v]]) for v in inner}


def _restricted_distance(space: ParameterComplex, verts: set[int], source: int) -> dict[int, float]:
    d = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in space.neighbors[u]:
            if w in verts and w not in d:
                d[w] = d[u] + 1
                queue.append(w)
    return {v: float(d.get(v, math.inf)) for v in verts}


def _components(space: ParameterComplex, verts: frozenset[int]) -> list[set[int]]:
    seen, out = set(), []
    for v in sorted(verts):
        if v in seen:
            continue
        comp, queue = {v}, deque([v])
        while queue:
            u = queue.popleft()
            for w in space.neighbors[u]:
                if w in verts and w not in comp:
                    comp.add(w)
                    queue.append(w)
        seen |= comp
        out.append(comp)
    return out


# -------------------------------------------------------------- separation

@dataclass(frozen=True, eq=False)
class Separated:
    family: SampledFamily
    gap_section: GapSection
    min_gap: float
    flattening: DeformationResult | None = None
    push: DeformationResult | None = None
    log: tuple[str, ...] = ()

    status = "separated"


@dataclass(frozen=True)
class Obstructed:
    chern: int
    log: tuple[str, ...] = ()

    status = "obstructed"


@dataclass(frozen=True)
class FlowObstructed:
    loop_sums: tuple[int, ...]
    log: tuple[str, ...] = ()

    status = "flow_obstructed"


def _pair_section(e: Exhaustion, n: int) -> GapSection:
    g = e.graph
    sigma = (e.mu(n) + e.mu(n + 1)) / 2
    projs = []
    for v, sh in enumerate(e.shifts):
        vecs = g.per_sample[v].eig.eigenvectors[:, n + 1 - sh:]
        projs.append(vecs @ vecs.conj().T)
    modulus = max((op_norm(projs[u] - projs[v]) for u, v in g.edges), default=0.0)
    return GapSection(n, sigma, tuple(projs), modulus, float(np.min(e.mu(n + 1) - e.mu(n))))


def _lower_projector(e: Exhaustion, v: int, n: int) -> np.ndarray:
    """Projector onto the whole cluster holding label ``n`` at ``v``."""
    c = e.graph.per_sample[v]
    return c.cluster(int(c.cluster_of_position[e.position(v, n)])).projector


def separation_locus(e: Exhaustion, n: int, threshold: float) -> frozenset[int]:
    """Vertices where the pair is degenerate, or where an edge is too coarse
    to rule out a crossing between its endpoints."""
    s = e.graph.sampled
    gap = e.mu(n + 1) - e.mu(n)
    locus = {v for v in range(len(gap)) if gap[v] <= threshold}
    for u, v in s.edges:
        if u in locus or v in locus:
            continue
        step = s.step(u, v)
        local = min(gap[u], gap[v])
        if step >= local / 2:
            locus |= {u, v}
        elif s.continuity == "matrix":
            jump = op_norm(_lower_projector(e, u, n) - _lower_projector(e, v, n))
            if jump > 4 * step / local + 1e-12:
                locus |= {u, v}
    return frozenset(locus)


def separate(s: SampledFamily, n: int = 0, level: float = 0.0, threshold: float | None = None,
             window: tuple[float, float] | None = None) -> Separated | Obstructed | FlowObstructed:
    """Try to open a gap between ``mu_n`` and ``mu_{n+1}`` everywhere.

    A sphere grid is treated as the boundary of a 3-cell: a separation there
    must extend inward, which the Chern number of the lower line forbids
    when nonzero.
    """
    thr = 10 * s.cluster_tol if threshold is None else threshold
    log = []
    g = spectral_graph(s, window)
    result, cocycle = exhaust(g, star_cover(s.space), level)
    if isinstance(result, FlowObstruction):
        return FlowObstructed(tuple(cocycle.loop_sums), ("spectral flow class is nonzero",))
    e = result
    lo, hi = e.label_range
    if not lo <= n < hi:
        raise ValueError(f"pair ({n}, {n + 1}) is outside the label range {lo}..{hi}")
    sphere = s.space.kind == "sphere_grid"
    locus = separation_locus(e, n, thr)
    log.append(f"locus: {len(locus)} vertices")
    if not locus:
        if sphere:
            c = position_chern(s, [e.position(v, n) for v in range(s.space.n_vertices)])
            log.append(f"lower line chern number {c}")
            if c != 0:
                return Obstructed(c, tuple(log))
        sec = _pair_section(e, n)
        return Separated(s, sec, sec.min_gap, log=tuple(log))

    region = make_region(s.space, locus, rings=1)
    flat = flatten(s, e, region, n)
    log.append(f"flattened {len(flat.changed)} vertices")
    e1 = relabel(e, spectral_graph(flat.family, g.window))

    def pair_space(v: int) -> np.ndarray:
        return flat.family.spectra[v].eig.eigenvectors[:, list(_pair_positions(e1, v, n))]

    known = {}
    for v in region.outer - region.inner:
        known[v] = flat.family.spectra[v].eig.eigenvectors[:, e1.position(v, n + 1)]
    lines = dict(known)
    for comp in _components(s.space, region.inner):
        lines.update(_extend_component(s.space, comp, known, pair_space))
    field = {v: np.outer(x, x.conj()) / np.vdot(x, x).real for v, x in lines.items()}
    push = rank_one_push(flat.family, field, e1, region, n)
    log.append(f"pushed {len(push.changed)} vertices")
    e2 = relabel(e, spectral_graph(push.family, g.window))
    gap = e2.mu(n + 1) - e2.mu(n)
    if gap.min() <= thr:
        raise ExtensionFailed(f"push left a gap of {gap.min():.3e}")
    if sphere:
        c = position_chern(push.family, [e2.position(v, n) for v in range(s.space.n_vertices)])
        log.append(f"lower line chern number {c}")
        if c != 0:
            return Obstructed(c, tuple(log))
    sec = _pair_section(e2, n)
    return Separated(push.family, sec, float(gap.min()), flat, push, tuple(log))


def separation_report(outcome) -> dict:
    out = {"status": outcome.status, "log": list(outcome.log)}
    if isinstance(outcome, Obstructed):
        out["chern"] = outcome.chern
    elif isinstance(outcome, FlowObstructed):
        out["loop_sums"] = list(outcome.loop_sums)
    else:
        out["min_gap"] = round(outcome.min_gap, 12)
        out["gap_index"] = outcome.gap_section.n
        out["continuity_modulus"] = round(outcome.gap_section.continuity_modulus, 12)
        for name, res in (("flattening", outcome.flattening), ("push", outcome.push)):
            if res is not None:
                out[name] = {"changed": sorted(res.changed), "vertices": res.report}
    return out
