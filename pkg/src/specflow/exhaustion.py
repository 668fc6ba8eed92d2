"""Enumerations, local and global spectral exhaustions, and spectral flow.

Labels are stored as integer shifts: at vertex ``v`` the eigenvalue in sorted
position ``p`` carries label ``p + shift[v]``. Propagating along an edge with
position offset ``s`` keeps a branch's label fixed, so
``shift[w] = shift[u] - s``. Two patch labelings of the same vertex differ
by an integer, and those differences form the spectral-flow cocycle.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AnchorMiss,
    GlueMismatch,
    InconsistentOffset,
    LevelCollision,
    PatchUnderResolved,
)
from .families import SampledFamily
from .hermitian import ClusteredSpectrum
from .spaces import CechCocycle, Cover, solve_coboundary
from .spectral import SpectralGraphData


@dataclass(frozen=True)
class Enumeration:
    anchor: tuple[float, str]
    labels: Mapping[int, float]
    shift: int

    def __getitem__(self, n: int) -> float:
        return self.labels[n]


def anchor_cluster(c: ClusteredSpectrum, level: float = 0.0, window: tuple[float, float] | None = None) -> int:
    """Cluster with the largest value at or below ``level``; the lowest one if none is."""
    lo, hi = window if window is not None else (-math.inf, math.inf)
    ks = [k for k in range(len(c)) if lo < c.values[k] < hi]
    if not ks:
        raise AnchorMiss("no cluster inside the window")
    below = [k for k in ks if c.values[k] <= level]
    return below[-1] if below else ks[0]


def enumerate_spectrum(c: ClusteredSpectrum, anchor_value: float,
                       window: tuple[float, float] | None = None) -> Enumeration:
    """Label the spectrum so the anchor cluster's top eigenvalue is label 0."""
    hits = np.flatnonzero(np.abs(c.values - anchor_value) <= c.cluster_tol)
    if hits.size == 0:
        raise AnchorMiss(f"no cluster within {c.cluster_tol:g} of {anchor_value!r}")
    k = int(hits[0])
    top = c.starts[k] + c.multiplicities[k] - 1
    w = c.eigenvalues
    lo, hi = window if window is not None else (-math.inf, math.inf)
    labels = {int(p - top): float(w[p]) for p in range(len(w)) if lo < w[p] < hi}
    return Enumeration((float(c.values[k]), "top-of-anchor"), labels, int(-top))


@dataclass(frozen=True, eq=False)
class LocalExhaustion:
    patch: int
    center: int
    shifts: Mapping[int, int]
    graph: SpectralGraphData

    @property
    def vertices(self) -> tuple[int, ...]:
        return tuple(sorted(self.shifts))

    def label(self, v: int, p: int) -> int:
        return p + self.shifts[v]

    def mu(self, n: int, v: int) -> float:
        return float(self.graph.per_sample[v].eigenvalues[n - self.shifts[v]])

    def labels(self, v: int) -> dict[int, float]:
        w = self.graph.per_sample[v].eigenvalues
        return {int(p + self.shifts[v]): float(w[p]) for p in self.graph.in_window(v)}


def _propagate(g: SpectralGraphData, vertices: frozenset[int], root: int, root_shift: int,
               what: str) -> dict[int, int]:
    s = g.sampled
    shifts = {root: root_shift}
    queue = deque([root])
    edges = g.space.induced_edges(vertices)
    adj: dict[int, list[int]] = {v: [] for v in vertices}
    for u, v in edges:
        if not s.edge_certified[s._edge_index[(u, v)]]:
            raise PatchUnderResolved(f"{what}: position offset across edge {(u, v)} is ambiguous")
        adj[u].append(v)
        adj[v].append(u)
    while queue:
        u = queue.popleft()
        for w in sorted(adj[u]):
            sw = shifts[u] - s.offset(u, w)
            if w not in shifts:
                shifts[w] = sw
                queue.append(w)
            elif shifts[w] != sw:
                raise PatchUnderResolved(f"{what}: labels disagree around vertex {w}")
    if len(shifts) != len(vertices):
        raise PatchUnderResolved(f"{what}: not connected")
    return shifts


def local_exhaustions(g: SpectralGraphData, cover: Cover, level: float = 0.0) -> list[LocalExhaustion]:
    """One labeling per patch, anchored at the patch center and carried along
    the patch's edges by the position offsets."""
    out = []
    for i, (patch, center) in enumerate(zip(cover.patches, cover.centers)):
        c = g.per_sample[center]
        k = anchor_cluster(c, level, g.window)
        top = int(c.starts[k] + c.multiplicities[k] - 1)
        shifts = _propagate(g, patch, center, -top, f"patch {i}")
        out.append(LocalExhaustion(i, center, shifts, g))
    return out


def spectral_flow_cocycle(locals_: Sequence[LocalExhaustion], cover: Cover) -> CechCocycle:
    """``nu_ij = shift_j - shift_i`` on each overlap, checked constant, then classified."""
    values = {}
    for i, j in cover.nerve_edges:
        diffs = {locals_[j].shifts[v] - locals_[i].shifts[v] for v in cover.overlap(i, j)}
        if len(diffs) != 1:
            raise InconsistentOffset(f"label offset varies over the overlap of patches {i}, {j}: {sorted(diffs)}")
        values[(i, j)] = diffs.pop()
    return solve_coboundary(values, cover)


def spectral_flow_crossings(s: SampledFamily, level: float, cluster_tol: float | None = None) -> int:
    """Net number of branches crossing ``level`` upward around a sampled loop."""
    if s.space.kind != "loop":
        raise ValueError("crossing count needs a loop")
    tol = s.cluster_tol if cluster_tol is None else cluster_tol
    for v, c in enumerate(s.spectra):
        d = np.abs(c.eigenvalues - level)
        if d.min() <= tol:
            p = int(np.argmin(d))
            raise LevelCollision(v, float(c.eigenvalues[p]), level)
    total = 0
    for k, (u, v) in enumerate(s.edges):
        if not s.edge_certified[k]:
            raise PatchUnderResolved(f"position offset across edge {(u, v)} is ambiguous")
        off = s.edge_offsets[k]
        a, b = s.spectra[u].eigenvalues, s.spectra[v].eigenvalues
        p = np.arange(max(0, -off), min(len(a), len(b) - off))
        x, y = a[p], b[p + off]
        total += int(np.count_nonzero((x < level) & (level < y))) - int(np.count_nonzero((y < level) & (level < x)))
    return total


@dataclass(frozen=True, eq=False)
class FlowObstruction:
    cocycle: CechCocycle

    @property
    def loop_sums(self) -> tuple[int, ...]:
        return self.cocycle.loop_sums

    def to_json(self) -> str:
        return json.dumps({"loop_sums": list(self.loop_sums), "witness": None}, sort_keys=True)


@dataclass(frozen=True, eq=False)
class Exhaustion:
    """Globally consistent labels: ``mu_n(v)`` is the eigenvalue in position ``n - shifts[v]``."""

    graph: SpectralGraphData
    shifts: tuple[int, ...]

    @cached_property
    def label_range(self) -> tuple[int, int]:
        lo, hi = -math.inf, math.inf
        for v, sh in enumerate(self.shifts):
            pos = self.graph.in_window(v)
            if pos.size == 0:
                return (0, -1)
            lo = max(lo, int(pos[0]) + sh)
            hi = min(hi, int(pos[-1]) + sh)
        return (int(lo), int(hi))

    @property
    def labels(self) -> range:
        lo, hi = self.label_range
        return range(lo, hi + 1)

    @cached_property
    def table(self) -> np.ndarray:
        """``table[n - lo, v] = mu_n(v)``."""
        lo, hi = self.label_range
        out = np.empty((max(0, hi - lo + 1), len(self.shifts)))
        for v, sh in enumerate(self.shifts):
            w = self.graph.per_sample[v].eigenvalues
            out[:, v] = w[lo - sh: hi - sh + 1]
        return out

    def mu(self, n: int) -> np.ndarray:
        lo, hi = self.label_range
        if not lo <= n <= hi:
            raise KeyError(f"label {n} outside {lo}..{hi}")
        return self.table[n - lo]

    def position(self, v: int, n: int) -> int:
        return n - self.shifts[v]

    @cached_property
    def min_gaps(self) -> dict[int, float]:
        lo, _ = self.label_range
        d = np.diff(self.table, axis=0)
        return {lo + i: float(d[i].min()) for i in range(d.shape[0])}


def global_exhaustion(locals_: Sequence[LocalExhaustion], cocycle: CechCocycle) -> Exhaustion | FlowObstruction:
    """Glue patch labelings with the coboundary witness, or report the obstruction."""
    if not cocycle.class_is_zero:
        return FlowObstruction(cocycle)
    g = locals_[0].graph
    shifts: dict[int, int] = {}
    for loc in locals_:
        sigma = cocycle.witness[loc.patch]
        for v, sh in loc.shifts.items():
            val = sh + sigma
            if shifts.setdefault(v, val) != val:
                raise GlueMismatch(f"patch labelings disagree at vertex {v} after gluing")
    if len(shifts) != g.space.n_vertices:
        raise GlueMismatch("patches do not cover every vertex")
    return Exhaustion(g, tuple(shifts[v] for v in range(g.space.n_vertices)))


def exhaust(g: SpectralGraphData, cover: Cover, level: float = 0.0):
    """Local exhaustions, cocycle and the glued result in one call."""
    locs = local_exhaustions(g, cover, level)
    cocycle = spectral_flow_cocycle(locs, cover)
    return global_exhaustion(locs, cocycle), cocycle


def check_enumeration(e: Exhaustion, slack: float = 1e-9) -> bool:
    """Per-vertex monotone exhaustion of the in-window spectrum, and branch
    continuity: adjacent values of each ``mu_n`` differ by at most the edge step."""
    t = e.table
    if t.shape[0] > 1 and np.any(np.diff(t, axis=0) < -slack):
        return False
    for v, sh in enumerate(e.shifts):
        w = e.graph.per_sample[v].eigenvalues
        pos = e.graph.in_window(v)
        lo, hi = e.label_range
        if not np.array_equal(t[:, v], w[lo - sh: hi - sh + 1]):
            return False
        # the common label range must land inside the window at every vertex
        inside = set(range(lo - sh, hi - sh + 1))
        if not inside.issubset(set(pos.tolist())):
            return False
    s = e.graph.sampled
    for k, (u, v) in enumerate(s.edges):
        if np.any(np.abs(t[:, u] - t[:, v]) > s.edge_steps[k] + slack):
            return False
    return True


def relabel(e: Exhaustion, g_new: SpectralGraphData) -> Exhaustion:
    """The same labels on a deformed graph; valid for order-preserving deformations."""
    if g_new.space.n_vertices != len(e.shifts):
        raise ValueError("relabel needs the same complex")
    return Exhaustion(g_new, e.shifts)


@dataclass(frozen=True, eq=False)
class GapSection:
    n: int
    sigma: np.ndarray
    projections: tuple[np.ndarray, ...]
    continuity_modulus: float
    min_gap: float


@dataclass(frozen=True)
class NoGapFound:
    min_gaps: Mapping[int, float] = field(default_factory=dict)
    threshold: float = 0.0


def _search_order(lo: int, hi: int):
    k = 0
    while -k >= lo or k <= hi:
        for n in ((0,) if k == 0 else (-k, k)):
            if lo <= n <= hi:
                yield n
        k += 1


def find_gap_section(e: Exhaustion, g: SpectralGraphData | None = None,
                     threshold: float | None = None) -> GapSection | NoGapFound:
    """First label ``n`` (searching 0, -1, 1, -2, ...) with a persistent gap
    between ``mu_n`` and ``mu_{n+1}``; the midpoint between them and the
    projections onto labels above ``n``."""
    g = e.graph if g is None else g
    thr = 10 * g.cluster_tol if threshold is None else threshold
    gaps = e.min_gaps
    if not gaps:
        return NoGapFound({}, thr)
    for n in _search_order(min(gaps), max(gaps)):
        if gaps[n] > thr:
            sigma = (e.mu(n) + e.mu(n + 1)) / 2
            projs = []
            for v, sh in enumerate(e.shifts):
                vecs = g.per_sample[v].eig.eigenvectors[:, n + 1 - sh:]
                projs.append(vecs @ vecs.conj().T)
            modulus = max((float(np.linalg.norm(projs[u] - projs[v], 2)) for u, v in g.edges), default=0.0)
            return GapSection(n, sigma, tuple(projs), modulus, gaps[n])
    return NoGapFound(dict(gaps), thr)


def exhaustion_csv(e: Exhaustion) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vertex", "n", "mu"])
    for v in range(len(e.shifts)):
        for n in e.labels:
            w.writerow([v, n, f"{e.mu(n)[v]:.12g}"])
    return buf.getvalue()
