"""The sampled spectral graph: clusters per sample inside a window, edge
matchings by sorted position, connected components and their covering
behaviour, canonical windows, and eigenprojection fields."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter, deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import IsolationFailure, NotConstantMultiplicity, WindowUnsafe
from .families import SampledFamily
from .hermitian import ClusteredSpectrum, cluster_spectrum, op_norm

PROJECTION_CONSTANT = 4.0


@dataclass(frozen=True, eq=False)
class SpectralGraphData:
    """Γ restricted to ``window``.

    Nodes are ``(vertex, cluster index)`` for clusters inside the window.
    ``branch_segments[e]`` lists the matched sorted positions ``(p, q)``
    across ``sampled.edges[e]`` with at least one side inside the window. A
    pair with only one side inside is a branch leaving through the window
    boundary; those edges are collected in ``boundary_exits``.
    """

    sampled: SampledFamily
    per_sample: tuple[ClusteredSpectrum, ...]
    window: tuple[float, float]
    gap_margin: float
    cluster_tol: float
    branch_segments: tuple[tuple[tuple[int, int], ...], ...]
    boundary_exits: tuple[tuple[int, int], ...]

    @property
    def space(self):
        return self.sampled.space

    @property
    def edges(self):
        return self.sampled.edges

    @property
    def boundary_safe(self) -> bool:
        return not self.boundary_exits

    def in_window(self, v: int) -> np.ndarray:
        """Sorted positions at ``v`` whose eigenvalue lies in the window."""
        w = self.per_sample[v].eigenvalues
        lo, hi = self.window
        return np.flatnonzero((w > lo) & (w < hi))

    def window_clusters(self, v: int) -> list[int]:
        c = self.per_sample[v]
        lo, hi = self.window
        return [k for k in range(len(c)) if lo < c.values[k] < hi]

    def offset(self, u: int, v: int) -> int:
        return self.sampled.offset(u, v)

    @cached_property
    def total_multiplicity(self) -> tuple[int, ...]:
        return tuple(len(self.in_window(v)) for v in range(self.space.n_vertices))


def _clear_point(values: np.ndarray, start: float, direction: int, reach: float = 0.5) -> float:
    """Point in ``start + direction * (0, reach]`` farthest from all ``values``."""
    cands = start + direction * reach * (np.arange(1, 41) / 40.0)
    dist = np.min(np.abs(values[None, :] - cands[:, None]), axis=1)
    return float(cands[int(np.argmax(dist))])


def _default_window(s: SampledFamily) -> tuple[float, float]:
    """The trusted window pulled inward to sampled-eigenvalue-free endpoints,
    or, for unbounded trust, the full sampled spectrum plus a unit margin."""
    lo, hi = s.trusted_window
    values = np.concatenate([c.values for c in s.spectra])
    if not math.isfinite(lo):
        lo = float(values.min()) - 1.0
    else:
        lo = _clear_point(values, lo, +1)
    if not math.isfinite(hi):
        hi = float(values.max()) + 1.0
    else:
        hi = _clear_point(values, hi, -1)
    return (lo, hi)


def spectral_graph(s: SampledFamily, window: tuple[float, float] | None = None,
                   cluster_tol: float | None = None, gap_margin: float | None = None) -> SpectralGraphData:
    """Cluster every sample, restrict to ``window`` and match across edges.

    Sorted-position matching is certified by Weyl wherever the sample is
    resolved; at unresolved edges (crossings) it is still the unique
    order-preserving matching, which is exactly what Γ records.
    """
    tol = s.cluster_tol if cluster_tol is None else cluster_tol
    margin = 5 * tol if gap_margin is None else gap_margin
    window = _default_window(s) if window is None else (float(window[0]), float(window[1]))
    lo, hi = window
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    tlo, thi = s.trusted_window
    if lo < tlo or hi > thi:
        raise ValueError(f"window {window} leaves the trusted window {s.trusted_window}")
    spectra = s.spectra if tol == s.cluster_tol else tuple(cluster_spectrum(c.eig, tol) for c in s.spectra)
    for v, c in enumerate(spectra):
        for x in c.values:
            if abs(x - lo) <= margin or abs(x - hi) <= margin:
                raise WindowUnsafe(v, float(x))
    segments, exits = [], []
    for k, (u, v) in enumerate(s.edges):
        off = s.edge_offsets[k]
        a, b = spectra[u].eigenvalues, spectra[v].eigenvalues
        seg = []
        for p in range(max(0, -off), min(len(a), len(b) - off)):
            q = p + off
            ina, inb = lo < a[p] < hi, lo < b[q] < hi
            if ina or inb:
                seg.append((p, q))
                if ina != inb:
                    exits.append((u, v))
        segments.append(tuple(seg))
    return SpectralGraphData(s, spectra, window, margin, tol, tuple(segments), tuple(dict.fromkeys(exits)))


@dataclass(frozen=True)
class CanonicalWindow:
    base: frozenset[int]
    interval: tuple[float, float]
    total_multiplicity: int


def _count_in(c: ClusteredSpectrum, lo: float, hi: float) -> int:
    w = c.eigenvalues
    return int(np.count_nonzero((w > lo) & (w < hi)))


def _near(c: ClusteredSpectrum, x: float, margin: float) -> bool:
    return bool(np.any(np.abs(c.values - x) <= margin))


def canonical_window(g: SpectralGraphData, vertex: int, cluster_index: int) -> CanonicalWindow:
    """Interval around a cluster plus the largest connected base over which
    the in-interval multiplicity stays equal to the cluster's multiplicity."""
    c = g.per_sample[vertex]
    if not 0 <= cluster_index < len(c):
        raise IndexError(f"vertex {vertex} has no cluster {cluster_index}")
    lam = float(c.values[cluster_index])
    k = int(c.multiplicities[cluster_index])
    others = np.delete(c.values, cluster_index)
    if len(others):
        delta = float(np.min(np.abs(others - lam))) / 2
    else:
        delta = min(lam - g.window[0], g.window[1] - lam) - g.gap_margin
    lo, hi = lam - delta, lam + delta

    def good(v: int) -> bool:
        cv = g.per_sample[v]
        return _count_in(cv, lo, hi) == k and not _near(cv, lo, g.gap_margin) and not _near(cv, hi, g.gap_margin)

    if not good(vertex):
        raise IsolationFailure(f"cluster {cluster_index} at vertex {vertex} cannot be isolated")
    base = {vertex}
    queue = deque([vertex])
    while queue:
        u = queue.popleft()
        for w in g.space.neighbors[u]:
            if w not in base and good(w):
                base.add(w)
                queue.append(w)
    return CanonicalWindow(frozenset(base), (lo, hi), k)


@dataclass(frozen=True, eq=False)
class GraphComponent:
    nodes: tuple[tuple[int, int], ...]
    is_covering: bool
    sheet_count: int | None
    multiplicity_profile: dict
    touches_boundary: bool

    @cached_property
    def vertices(self) -> tuple[int, ...]:
        return tuple(sorted({v for v, _ in self.nodes}))

    @cached_property
    def _by_vertex(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for v, k in self.nodes:
            out.setdefault(v, []).append(k)
        return out

    def clusters_at(self, v: int) -> list[int]:
        return self._by_vertex.get(v, [])

    @property
    def has_constant_multiplicity(self) -> bool:
        return len(set(self.multiplicity_profile.values())) == 1


def components(g: SpectralGraphData) -> list[GraphComponent]:
    """Connected components of the matched in-window nodes."""
    nodes = [(v, k) for v in range(g.space.n_vertices) for k in g.window_clusters(v)]
    index = {n: i for i, n in enumerate(nodes)}
    parent = list(range(len(nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    exit_nodes = set()
    for e, (u, v) in enumerate(g.edges):
        cu, cv = g.per_sample[u].cluster_of_position, g.per_sample[v].cluster_of_position
        for p, q in g.branch_segments[e]:
            a, b = index.get((u, int(cu[p]))), index.get((v, int(cv[q])))
            if a is not None and b is not None:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            elif a is not None:
                exit_nodes.add(a)
            elif b is not None:
                exit_nodes.add(b)
    groups: dict[int, list[int]] = {}
    for i in range(len(nodes)):
        groups.setdefault(find(i), []).append(i)
    out = []
    nv = g.space.n_vertices
    for root in sorted(groups):
        members = groups[root]
        comp_nodes = tuple(nodes[i] for i in members)
        fibers = Counter(v for v, _ in comp_nodes)
        touches = any(i in exit_nodes for i in members)
        counts = set(fibers.values())
        covering = len(fibers) == nv and len(counts) == 1 and not touches
        profile = {n: int(g.per_sample[n[0]].multiplicities[n[1]]) for n in comp_nodes}
        out.append(GraphComponent(comp_nodes, covering, counts.pop() if covering else None, profile, touches))
    return out


@dataclass(frozen=True, eq=False)
class ProjectionField:
    projectors: tuple[np.ndarray, ...]
    continuity_modulus: float
    bound: float


def _component_gaps(g: SpectralGraphData, comp: GraphComponent) -> dict[int, float]:
    """Per vertex: distance from the component's clusters to every other cluster."""
    out = {}
    for v in comp.vertices:
        c = g.per_sample[v]
        mine = set(comp.clusters_at(v))
        inside = c.values[sorted(mine)]
        rest = np.array([c.values[k] for k in range(len(c)) if k not in mine])
        out[v] = float(np.min(np.abs(rest[:, None] - inside[None, :]))) if len(rest) else math.inf
    return out


def _lowest_line(g: SpectralGraphData, comp: GraphComponent, v: int) -> np.ndarray | None:
    ks = comp.clusters_at(v)
    if not ks:
        return None
    c = g.per_sample[v]
    p = int(c.starts[min(ks)])
    x = c.eig.eigenvectors[:, p]
    return np.outer(x, x.conj())


def _merge_jump(g: SpectralGraphData, comp: GraphComponent) -> float:
    fibers = Counter(v for v, _ in comp.nodes)
    mults = {v: tuple(comp.multiplicity_profile[(v, k)] for k in comp.clusters_at(v)) for v in fibers}
    modal = Counter(mults.values()).most_common(1)[0][0]
    regular = {v for v, m in mults.items() if m == modal}
    irregular = (set(range(g.space.n_vertices)) - regular)
    jump = 0.0
    nb = g.space.neighbors
    for m in irregular:
        near = [w for w in nb[m] if w in regular]
        for i, a in enumerate(near):
            for b in near[i + 1:]:
                jump = max(jump, op_norm(_lowest_line(g, comp, a) - _lowest_line(g, comp, b)))
    for u, v in g.edges:
        if u in regular and v in regular:
            jump = max(jump, op_norm(_lowest_line(g, comp, u) - _lowest_line(g, comp, v)))
    return jump


def projection_field(g: SpectralGraphData, comp: GraphComponent) -> ProjectionField:
    """Sum of the component's cluster projectors at every sample.

    Raises :class:`NotConstantMultiplicity` when the component is not a
    covering with constant multiplicity, and when the measured modulus exceeds
    ``4 max_step / gap``: a jump that large means a crossing slipped between
    samples, which is the same failure seen from the projection side.
    """
    if not comp.is_covering or not comp.has_constant_multiplicity:
        raise NotConstantMultiplicity("component multiplicity is not constant", _merge_jump(g, comp))
    projs = []
    for v in range(g.space.n_vertices):
        c = g.per_sample[v]
        projs.append(sum(c.cluster(k).projector for k in comp.clusters_at(v)))
    jumps = [op_norm(projs[u] - projs[v]) for u, v in g.edges]
    modulus = max(jumps, default=0.0)
    gaps = _component_gaps(g, comp)
    steps = [g.sampled.step(u, v) for u, v in g.edges]
    gap = min(gaps.values())
    bound = PROJECTION_CONSTANT * max(steps, default=0.0) / gap if gap > 0 else math.inf
    if g.sampled.continuity == "matrix":
        blind = [j for (u, v), st, j in zip(g.edges, steps, jumps) if st >= min(gaps[u], gaps[v]) / 2]
        if blind:
            raise NotConstantMultiplicity("component gap not resolved by the sampling", max(blind))
        if modulus > bound + 1e-12:
            raise NotConstantMultiplicity("projection jumps faster than the gap allows (hidden crossing)", modulus)
    return ProjectionField(tuple(projs), float(modulus), float(bound))


def graph_csv(g: SpectralGraphData, comps: list[GraphComponent] | None = None) -> str:
    """Γ as CSV rows ``sample_id, coordinates, cluster_value, multiplicity, component_id``."""
    comps = components(g) if comps is None else comps
    cid = {n: i for i, c in enumerate(comps) for n in c.nodes}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "coordinates", "cluster_value", "multiplicity", "component_id"])
    for v in range(g.space.n_vertices):
        c = g.per_sample[v]
        coords = " ".join(f"{x:.9g}" for x in g.space.coords[v])
        for k in g.window_clusters(v):
            w.writerow([v, coords, f"{c.values[k]:.12g}", int(c.multiplicities[k]), cid[(v, k)]])
    return buf.getvalue()
