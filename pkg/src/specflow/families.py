"""Operator families over a parameter complex: closed-form generators,
vertex tables with barycentric interpolation, sampling with a resolution
certificate, and refinement.

Two continuity models are supported. ``"matrix"`` families are norm
continuous, so sorted eigenvalues at adjacent samples pair up position by
position (Weyl). ``"spectral"`` families (truncated Mickelsson lifts) are only
continuous as spectra: a principal-branch logarithm can jump by a full period
across an edge while the spectrum does not move. Their edges carry an integer
position offset found by matching the sorted spectra inside the trusted
window.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import OutsideComplex, RefinementUnsupported, ResolutionBudgetExceeded
from .hermitian import (
    DEFAULT_CLUSTER_TOL,
    ClusteredSpectrum,
    HermitianOperator,
    cluster_spectrum,
    eigh,
    op_norm,
)
from .spaces import ParameterComplex, build_general, build_sphere_grid, loop_from_parameters

log = logging.getLogger(__name__)

SAMPLE_BUDGET = 10**6
INF_WINDOW = (-math.inf, math.inf)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class OperatorFamily:
    """A family ``x -> D_x`` over ``space``.

    Exactly one of ``table`` (one matrix per vertex, interpolated
    barycentrically) or ``formula`` (coordinates -> matrix) is set.
    """

    space: ParameterComplex
    dim: int
    table: tuple[HermitianOperator, ...] | None = None
    formula: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom_table"
    params: Mapping = field(default_factory=dict)
    continuity: str = "matrix"
    trusted_window: tuple[float, float] = INF_WINDOW

    def __post_init__(self):
        if (self.table is None) == (self.formula is None):
            raise ValueError("give exactly one of table / formula")
        if self.table is not None:
            if len(self.table) != self.space.n_vertices:
                raise ValueError("vertex table must cover every vertex")
            if any(D.dim != self.dim for D in self.table):
                raise ValueError("all table matrices must share dim")
        if self.continuity not in ("matrix", "spectral"):
            raise ValueError(f"unknown continuity model {self.continuity!r}")

    def with_space(self, space: ParameterComplex) -> "OperatorFamily":
        if self.formula is None:
            raise RefinementUnsupported("vertex tables cannot be moved to a new complex")
        return OperatorFamily(space, self.dim, None, self.formula, self.name, self.params,
                              self.continuity, self.trusted_window)


def _barycentric(space: ParameterComplex, x):
    if isinstance(x, (int, np.integer)):
        if not 0 <= x < space.n_vertices:
            raise OutsideComplex(f"vertex {x} not in complex")
        return (int(x),), np.array([1.0])
    try:
        simplex, weights = x
    except (TypeError, ValueError) as exc:
        raise OutsideComplex(f"cannot interpret point {x!r}") from exc
    simplex = tuple(int(v) for v in simplex)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(simplex)
    key = tuple(simplex[i] for i in order)
    if key not in space.simplex_set:
        raise OutsideComplex(f"{simplex} is not a simplex of the complex")
    if len(weights) != len(simplex) or np.any(weights < -1e-12) or abs(weights.sum() - 1) > 1e-9:
        raise OutsideComplex(f"invalid barycentric weights {weights}")
    return simplex, weights


def evaluate(f: OperatorFamily, x) -> HermitianOperator:
    """Operator at a vertex id or a barycentric point ``(simplex, weights)``."""
    simplex, weights = _barycentric(f.space, x)
    if f.table is not None:
        acc = sum(w * f.table[v].entries for v, w in zip(simplex, weights))
        return HermitianOperator(acc)
    coords = np.einsum("i,ij->j", weights, f.space.coords[list(simplex)])
    return HermitianOperator(f.formula(coords))


# ---------------------------------------------------------------- generators

def pauli_sphere(space: ParameterComplex, radius: float = 1.0) -> OperatorFamily:
    """``radius * (k/|k|) . sigma``: eigenvalues +-radius everywhere."""
    def formula(p):
        k = np.zeros(3)
        k[: min(3, len(p))] = p[:3]
        k = k / np.linalg.norm(k)
        return radius * (k[0] * SIGMA_X + k[1] * SIGMA_Y + k[2] * SIGMA_Z)
    return OperatorFamily(space, 2, formula=formula, name="pauli_sphere", params={"radius": radius})


def linear_pauli(space: ParameterComplex, slope: float = 1.0, shift: float = 0.0,
                 epsilon: float = 0.0) -> OperatorFamily:
    """``(shift + slope*x) sigma_z + epsilon sigma_x`` with x the first coordinate."""
    def formula(p):
        return (shift + slope * p[0]) * SIGMA_Z + epsilon * SIGMA_X
    return OperatorFamily(space, 2, formula=formula, name="linear_pauli",
                          params={"slope": slope, "shift": shift, "epsilon": epsilon})


def constant(space: ParameterComplex, diagonal: Sequence[float] | None = None,
             matrix=None) -> OperatorFamily:
    if (diagonal is None) == (matrix is None):
        raise ValueError("constant needs exactly one of diagonal / matrix")
    m = np.diag(np.asarray(diagonal, dtype=complex)) if diagonal is not None else _matrix_from_json(matrix)
    D = HermitianOperator(m)
    params = {"diagonal": list(diagonal)} if diagonal is not None else {"matrix": matrix}
    return OperatorFamily(space, D.dim, formula=lambda p: D.entries, name="constant", params=params)


def _mixing_generator(dim: int) -> np.ndarray:
    k = np.zeros((dim, dim), dtype=complex)
    for i in range(dim - 1):
        k[i, i + 1] = 1.0
        k[i + 1, i] = 1.0
    k[0, dim - 1] += 0.5j
    k[dim - 1, 0] -= 0.5j
    return k


def _rotation(twist: float, x: float, dim: int) -> np.ndarray:
    w, v = np.linalg.eigh(_mixing_generator(dim))
    return (v * np.exp(1j * twist * x * w)) @ v.conj().T


def paired_bands(space: ParameterComplex, lower: float = -1.0, upper: float = 1.0,
                 amplitude: float = 0.3, twist: float = 0.5) -> OperatorFamily:
    """``R(x) diag(f, f, g, g) R(x)*`` with ``f = lower + a x_0``, ``g = upper + a x_1``.

    Constant multiplicity 2 on both bands; ``R`` rotates the eigenvectors so the
    eigenprojections actually move.
    """
    if upper - lower <= 2 * abs(amplitude) * math.sqrt(2):
        raise ValueError("paired_bands: bands would touch")

    def formula(p):
        q = np.zeros(2)
        q[: min(2, len(p))] = p[:2]
        f = lower + amplitude * q[0]
        g = upper + amplitude * q[1]
        r = _rotation(twist, q[0], 4)
        return r @ np.diag([f, f, g, g]).astype(complex) @ r.conj().T
    return OperatorFamily(space, 4, formula=formula, name="paired_bands",
                          params={"lower": lower, "upper": upper, "amplitude": amplitude, "twist": twist})


def frame_bands(space: ParameterComplex, amplitude: float = 1.0, spectator: float = 2.0) -> OperatorFamily:
    """``diag(-a h, a h, spectator)`` with ``h = max(0, height)``.

    A constant eigenframe; the lower pair is degenerate wherever the height
    (last coordinate) is nonpositive.
    """
    def formula(p):
        h = max(0.0, float(p[-1]))
        return np.diag([-amplitude * h, amplitude * h, spectator]).astype(complex)
    return OperatorFamily(space, 3, formula=formula, name="frame_bands",
                          params={"amplitude": amplitude, "spectator": spectator})


def mickelsson_loop(space: ParameterComplex, windings: Sequence[int], M: int = 8,
                    n: int | None = None, basis_seed: int | None = None) -> OperatorFamily:
    """Truncated Mickelsson operators of ``U(t) = W diag(exp(2 pi i w_j t)) W*``.

    ``t`` is the loop angle of the point; ``W`` is the identity unless a
    ``basis_seed`` is given.
    """
    from .mickelsson import UnitaryMatrix, mickelsson_truncate, random_unitary

    w = [int(x) for x in windings]
    if n is None:
        n = len(w)
    if n < len(w):
        raise ValueError("more windings than the unitary size n")
    w = w + [0] * (n - len(w))
    basis = np.eye(n, dtype=complex) if basis_seed is None else random_unitary(n, basis_seed)

    def unitary_at(t: float) -> np.ndarray:
        return (basis * np.exp(2j * math.pi * np.array(w) * t)) @ basis.conj().T

    def formula(p):
        t = (math.atan2(p[1], p[0]) / (2 * math.pi)) % 1.0
        return mickelsson_truncate(UnitaryMatrix(unitary_at(t)), M).matrix.entries

    fam = OperatorFamily(space, (2 * M + 1) * n, formula=formula, name="mickelsson_loop",
                         params={"windings": w, "M": M, "n": n, "basis_seed": basis_seed},
                         continuity="spectral", trusted_window=(-M + 1.0, M - 1.0))
    object.__setattr__(fam, "unitary_at", unitary_at)
    return fam


def _matrix_from_json(m) -> np.ndarray:
    if isinstance(m, Mapping):
        re = np.asarray(m["re"], dtype=float)
        im = np.asarray(m.get("im", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(m, dtype=complex)


def vertex_table(space: ParameterComplex, matrices: Sequence, continuity: str = "matrix",
                 trusted_window: tuple[float, float] = INF_WINDOW, name: str = "custom_table",
                 params: Mapping | None = None) -> OperatorFamily:
    table = tuple(m if isinstance(m, HermitianOperator) else HermitianOperator(_matrix_from_json(m))
                  for m in matrices)
    return OperatorFamily(space, table[0].dim, table=table, name=name, params=params or {},
                          continuity=continuity, trusted_window=tuple(trusted_window))


def custom_table(space: ParameterComplex, file: str | os.PathLike | None = None,
                 matrices: Sequence | None = None, base_dir: str | os.PathLike | None = None) -> OperatorFamily:
    """Table from a JSON file ``{"matrices": [...], "continuity": ..., "trusted_window": ...}``.

    Each matrix is either a nested list of numbers or ``{"re": ..., "im": ...}``.
    """
    doc = {}
    if file is not None:
        path = Path(file)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        doc = json.loads(path.read_text())
        matrices = doc["matrices"]
    if matrices is None:
        raise ValueError("custom_table needs a file or matrices")
    window = doc.get("trusted_window")
    return vertex_table(space, matrices, doc.get("continuity", "matrix"),
                        INF_WINDOW if window is None else tuple(window),
                        params={"file": str(file)} if file is not None else {})


GENERATORS: dict[str, Callable[..., OperatorFamily]] = {
    "pauli_sphere": pauli_sphere,
    "mickelsson_loop": mickelsson_loop,
    "custom_table": custom_table,
    "linear_pauli": linear_pauli,
    "constant": constant,
    "paired_bands": paired_bands,
    "frame_bands": frame_bands,
}


# ------------------------------------------------------------------ sampling

@dataclass(frozen=True, eq=False)
class SampledFamily:
    """A family evaluated at every vertex with edge data and a resolution certificate.

    ``edge_offsets[e]`` pairs sorted position ``p`` at ``edges[e][0]`` with
    position ``p + offset`` at ``edges[e][1]``. ``edge_steps`` are operator-norm
    differences for matrix families and matched-spectrum distances for
    spectral families. ``resolution_ok`` certifies ``max_step < gap_floor/2``
    with every offset uniquely determined.
    """

    space: ParameterComplex
    samples: tuple[HermitianOperator, ...]
    spectra: tuple[ClusteredSpectrum, ...]
    edges: tuple[tuple[int, int], ...]
    edge_steps: np.ndarray
    edge_offsets: tuple[int, ...]
    edge_certified: tuple[bool, ...]
    vertex_gaps: np.ndarray
    gap_floor: float
    max_step: float
    resolution_ok: bool
    continuity: str = "matrix"
    trusted_window: tuple[float, float] = INF_WINDOW
    cluster_tol: float = DEFAULT_CLUSTER_TOL
    family: OperatorFamily | None = None

    @property
    def adjacency(self) -> tuple[tuple[int, int], ...]:
        return self.edges

    @cached_property
    def _edge_index(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.edges)}

    def offset(self, u: int, v: int) -> int:
        """Position offset from ``u`` to ``v`` along an edge in either orientation."""
        k = self._edge_index.get((u, v))
        if k is not None:
            return self.edge_offsets[k]
        return -self.edge_offsets[self._edge_index[(v, u)]]

    def step(self, u: int, v: int) -> float:
        k = self._edge_index.get((u, v))
        if k is None:
            k = self._edge_index[(v, u)]
        return float(self.edge_steps[k])

    @cached_property
    def edge_resolved(self) -> tuple[bool, ...]:
        out = []
        for k, (u, v) in enumerate(self.edges):
            gap = min(self.vertex_gaps[u], self.vertex_gaps[v])
            out.append(bool(self.edge_certified[k] and self.edge_steps[k] < gap / 2))
        return tuple(out)

    @property
    def unresolved_edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(e for e, ok in zip(self.edges, self.edge_resolved) if not ok)

    def trusted_positions(self, v: int) -> np.ndarray:
        w = self.spectra[v].eigenvalues
        lo, hi = self.trusted_window
        return np.flatnonzero((w > lo) & (w < hi))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SPECFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _trusted_gap(c: ClusteredSpectrum, window: tuple[float, float]) -> float:
    lo, hi = window
    vals = c.values[(c.values > lo) & (c.values < hi)]
    if len(vals) < 2:
        return math.inf
    return float(np.min(np.diff(vals)))


def match_offset(a: np.ndarray, b: np.ndarray, window: tuple[float, float],
                 search: int = 3) -> tuple[int, float, bool]:
    """Best position offset ``s`` pairing ``a[p]`` with ``b[p + s]``.

    Every eigenvalue inside ``window`` on either side must find a partner.
    Returns ``(s, distance, certified)``; certified means the runner-up
    distance is more than twice the best one.
    """
    lo, hi = window
    ta = (a > lo) & (a < hi)
    tb = (b > lo) & (b < hi)
    s0 = int(np.count_nonzero(b <= lo) - np.count_nonzero(a <= lo)) if math.isfinite(lo) else 0
    scores = {}
    for s in range(s0 - search, s0 + search + 1):
        p = np.arange(max(0, -s), min(len(a), len(b) - s))
        if p.size == 0:
            scores[s] = math.inf
            continue
        covered_a = np.zeros(len(a), bool)
        covered_a[p] = True
        covered_b = np.zeros(len(b), bool)
        covered_b[p + s] = True
        if np.any(ta & ~covered_a) or np.any(tb & ~covered_b):
            scores[s] = math.inf
            continue
        keep = ta[p] | tb[p + s]
        if not keep.any():
            scores[s] = math.inf
            continue
        scores[s] = float(np.max(np.abs(a[p][keep] - b[p + s][keep])))
    best = min(scores, key=lambda s: (scores[s], abs(s - s0), s))
    others = [d for s, d in scores.items() if s != best]
    runner = min(others) if others else math.inf
    return best, scores[best], bool(math.isfinite(scores[best]) and runner > 2 * scores[best])


def sample_matrices(space: ParameterComplex, matrices: Sequence[HermitianOperator], *,
                    continuity: str = "matrix", trusted_window: tuple[float, float] = INF_WINDOW,
                    cluster_tol: float = DEFAULT_CLUSTER_TOL,
                    family: OperatorFamily | None = None) -> SampledFamily:
    """Build a :class:`SampledFamily` from one matrix per vertex."""
    matrices = tuple(matrices)
    if len(matrices) != space.n_vertices:
        raise ValueError("need one matrix per vertex")
    spectra = tuple(_map(lambda D: cluster_spectrum(eigh(D), cluster_tol), matrices))
    gaps = np.array([_trusted_gap(c, trusted_window) for c in spectra])
    steps, offsets, certified = [], [], []
    for u, v in space.edges:
        if continuity == "matrix":
            steps.append(op_norm(matrices[u].entries - matrices[v].entries))
            offsets.append(0)
            certified.append(True)
        else:
            s, d, ok = match_offset(spectra[u].eigenvalues, spectra[v].eigenvalues, trusted_window)
            steps.append(d)
            offsets.append(s)
            certified.append(ok)
    steps = np.array(steps, dtype=float)
    gap_floor = float(np.min(gaps)) if len(gaps) else math.inf
    max_step = float(np.max(steps)) if len(steps) else 0.0
    ok = bool(all(certified) and max_step < gap_floor / 2)
    return SampledFamily(space, matrices, spectra, tuple(space.edges), steps, tuple(offsets),
                         tuple(certified), gaps, gap_floor, max_step, ok, continuity,
                         tuple(trusted_window), cluster_tol, family)


def sample(f: OperatorFamily, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> SampledFamily:
    mats = _map(lambda v: evaluate(f, v), range(f.space.n_vertices))
    return sample_matrices(f.space, mats, continuity=f.continuity, trusted_window=f.trusted_window,
                           cluster_tol=cluster_tol, family=f)


# ---------------------------------------------------------------- refinement

def _violating_edges(s: SampledFamily) -> list[int]:
    bad = []
    for k, (u, v) in enumerate(s.edges):
        local = min(s.vertex_gaps[u], s.vertex_gaps[v])
        if not s.edge_certified[k] or s.edge_steps[k] >= local / 2 or s.edge_steps[k] >= s.gap_floor / 2:
            bad.append(k)
    return bad


def _region(s: SampledFamily, bad: list[int]) -> list[list[list[float]]]:
    return [[s.space.coords[u].round(9).tolist(), s.space.coords[v].round(9).tolist()]
            for u, v in (s.edges[k] for k in bad[:8])]


def refine(f: OperatorFamily, s: SampledFamily | None = None, budget: int = SAMPLE_BUDGET) -> SampledFamily:
    """Bisect violating edges (or double a sphere grid) until ``resolution_ok``.

    The budget counts equivalent uniform samples: the sampling density near
    the finest edge, extended to the whole space. Exhausting it means the
    gap closes faster than sampling can follow, i.e. a genuine crossing.
    """
    if s is None:
        s = sample(f)
    cluster_tol = s.cluster_tol
    space = f.space
    while not s.resolution_ok:
        bad = _violating_edges(s)
        if space.kind == "sphere_grid":
            if f.formula is None:
                raise RefinementUnsupported("sphere grids refine only closed-form generators")
            nt, nph = space.grid_shape
            if 4 * nt * nph > budget:
                raise ResolutionBudgetExceeded(_region(s, bad), nt * nph)
            space = build_sphere_grid(2 * nt, 2 * nph)
            f = f.with_space(space)
        elif space.dimension == 1:
            if f.table is not None and f.continuity != "matrix":
                raise RefinementUnsupported("spectral vertex tables have no midpoint values")
            space, f, equiv = _bisect(f, space, [s.edges[k] for k in bad])
            if equiv > budget:
                raise ResolutionBudgetExceeded(_region(s, bad), equiv)
        else:
            raise RefinementUnsupported(f"cannot refine a {space.dimension}-dimensional {space.kind} complex")
        s = sample(f, cluster_tol)
    return s


def _bisect(f: OperatorFamily, space: ParameterComplex, edges: list[tuple[int, int]]):
    bad = set(edges)
    if space.kind == "loop":
        ts = [space.loop_parameter(v) for v in range(space.n_vertices)]
        new_ts = []
        for k in range(len(ts)):
            a, b = ts[k], ts[(k + 1) % len(ts)]
            new_ts.append(a)
            if (k, (k + 1) % len(ts)) in bad:
                if b <= a:
                    b += 1.0
                new_ts.append(((a + b) / 2) % 1.0)
        ordered = [(t - new_ts[0]) % 1.0 for t in new_ts]
        lengths = np.diff(ordered + [1.0])
        equiv = int(math.ceil(1.0 / float(np.min(lengths))))
        new_space = loop_from_parameters(new_ts)
        if f.formula is not None:
            return new_space, f.with_space(new_space), equiv
        mats = list(f.table)
        out = []
        for k in range(space.n_vertices):
            out.append(mats[k])
            e = (k, (k + 1) % space.n_vertices)
            if e in bad:
                out.append(HermitianOperator((mats[e[0]].entries + mats[e[1]].entries) / 2))
        return new_space, vertex_table(new_space, out, f.continuity, f.trusted_window, f.name, f.params), equiv

    coords = [c for c in space.coords]
    simplices = [list(e) for e in space.edges if e not in bad]
    extra = []
    for u, v in space.edges:
        if (u, v) in bad:
            m = len(coords)
            coords.append((space.coords[u] + space.coords[v]) / 2)
            simplices += [[u, m], [m, v]]
            extra.append((u, v))
    new_space = build_general({"vertices": [c.tolist() for c in coords], "simplices": simplices})
    lengths = [np.linalg.norm(new_space.coords[a] - new_space.coords[b]) for a, b in new_space.edges]
    total = sum(np.linalg.norm(space.coords[a] - space.coords[b]) for a, b in space.edges)
    equiv = int(math.ceil(total / max(min(lengths), 1e-300)))
    if f.formula is not None:
        return new_space, f.with_space(new_space), equiv
    out = list(f.table) + [HermitianOperator((f.table[u].entries + f.table[v].entries) / 2) for u, v in extra]
    return new_space, vertex_table(new_space, out, f.continuity, f.trusted_window, f.name, f.params), equiv
