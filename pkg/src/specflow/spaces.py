"""Finite simplicial parameter spaces, star covers, nerves and integer
1-cochains on the nerve.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .errors import MalformedComplex, NotACocycle

KINDS = ("loop", "sphere_grid", "general")


@dataclass(frozen=True, eq=False)
class ParameterComplex:
    """A finite simplicial complex with vertex coordinates.

    ``simplices`` holds every simplex as a sorted vertex tuple, vertices
    included. ``edges`` is the 1-skeleton in its canonical orientation: loops
    use ``(k, k+1 mod N)``, everything else ``(min, max)``. Sphere grids carry
    their outward-oriented quadrilateral (and polar triangle) plaquettes.
    """

    coords: np.ndarray
    simplices: tuple[tuple[int, ...], ...]
    kind: str = "general"
    edges: tuple[tuple[int, int], ...] = ()
    plaquettes: tuple[tuple[int, ...], ...] = ()
    grid_shape: tuple[int, int] | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def dimension(self) -> int:
        return max(len(s) for s in self.simplices) - 1

    @cached_property
    def simplex_set(self) -> frozenset:
        return frozenset(self.simplices)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nb = [set() for _ in range(self.n_vertices)]
        for u, v in self.edges:
            nb[u].add(v)
            nb[v].add(u)
        return tuple(tuple(sorted(s)) for s in nb)

    def count(self, k: int) -> int:
        return sum(1 for s in self.simplices if len(s) == k + 1)

    def euler_characteristic(self) -> int:
        return sum((-1) ** (len(s) - 1) for s in self.simplices)

    def closed_star(self, v: int) -> frozenset[int]:
        return frozenset(x for s in self._maximal_at(v) for x in s)

    @cached_property
    def _containing(self) -> tuple[tuple[tuple[int, ...], ...], ...]:
        acc = [[] for _ in range(self.n_vertices)]
        for s in self.simplices:
            for x in s:
                acc[x].append(s)
        return tuple(tuple(a) for a in acc)

    def _maximal_at(self, v: int):
        return self._containing[v]

    def induced_edges(self, vertices: Iterable[int]) -> list[tuple[int, int]]:
        vs = set(vertices)
        return [e for e in self.edges if e[0] in vs and e[1] in vs]

    def is_connected(self, vertices: Iterable[int] | None = None) -> bool:
        vs = set(range(self.n_vertices)) if vertices is None else set(vertices)
        if not vs:
            return False
        start = min(vs)
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in self.neighbors[u]:
                if w in vs and w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen == vs

    def loop_parameter(self, v: int) -> float:
        """Angle parameter in [0, 1) of a loop vertex."""
        x, y = self.coords[v][:2]
        return (math.atan2(y, x) / (2 * math.pi)) % 1.0


def _close_check(simplices: set[tuple[int, ...]], n_vertices: int) -> None:
    for s in simplices:
        if len(set(s)) != len(s):
            raise MalformedComplex(f"simplex {s} repeats a vertex")
        for x in s:
            if not 0 <= x < n_vertices:
                raise MalformedComplex(f"simplex {s} references missing vertex {x}")
    for s in simplices:
        if len(s) > 2:
            for face in itertools.combinations(s, len(s) - 1):
                if face not in simplices:
                    raise MalformedComplex(f"face {face} of simplex {s} is not listed")


def _sorted_simplices(simplices: Iterable[tuple[int, ...]]) -> tuple[tuple[int, ...], ...]:
    return tuple(sorted(set(tuple(sorted(s)) for s in simplices), key=lambda s: (len(s), s)))


def loop_from_parameters(ts: Iterable[float]) -> ParameterComplex:
    """Loop through points ``exp(2 pi i t)`` in the given cyclic order."""
    ts = [float(t) % 1.0 for t in ts]
    n = len(ts)
    if n < 3:
        raise MalformedComplex("a loop needs at least 3 vertices")
    coords = np.array([[math.cos(2 * math.pi * t), math.sin(2 * math.pi * t)] for t in ts])
    edges = tuple((k, (k + 1) % n) for k in range(n))
    simplices = _sorted_simplices([(k,) for k in range(n)] + list(edges))
    return ParameterComplex(coords, simplices, "loop", edges)


def build_loop(N: int) -> ParameterComplex:
    if N < 3:
        raise MalformedComplex("build_loop needs N >= 3")
    return loop_from_parameters([k / N for k in range(N)])


def path_from_points(xs: Iterable[float]) -> ParameterComplex:
    xs = [float(x) for x in xs]
    n = len(xs)
    if n < 2:
        raise MalformedComplex("a path needs at least 2 vertices")
    coords = np.array(xs, dtype=float)[:, None]
    edges = tuple((k, k + 1) for k in range(n - 1))
    simplices = _sorted_simplices([(k,) for k in range(n)] + list(edges))
    return ParameterComplex(coords, simplices, "general", edges)


def build_path(N: int, lo: float = -1.0, hi: float = 1.0) -> ParameterComplex:
    """Segment ``[lo, hi]`` sampled at N equispaced points (a general complex)."""
    return path_from_points(np.linspace(lo, hi, N))


def build_sphere_grid(n_theta: int, n_phi: int) -> ParameterComplex:
    """Latitude/longitude grid on the unit sphere.

    Rings ``k = 1 .. n_theta-1`` at polar angle ``pi k / n_theta`` carry
    ``n_phi`` vertices each; the two polar rings collapse to single vertices.
    Quadrilateral plaquettes are split into two triangles for the simplicial
    structure, and every plaquette is listed counterclockwise as seen from
    outside.
    """
    if n_theta < 4 or n_phi < 4:
        raise MalformedComplex("build_sphere_grid needs n_theta, n_phi >= 4")
    north, south = 0, 1 + (n_theta - 1) * n_phi

    def vid(k, j):
        if k == 0:
            return north
        if k == n_theta:
            return south
        return 1 + (k - 1) * n_phi + (j % n_phi)

    coords = [[0.0, 0.0, 1.0]]
    for k in range(1, n_theta):
        th = math.pi * k / n_theta
        for j in range(n_phi):
            ph = 2 * math.pi * j / n_phi
            coords.append([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    coords.append([0.0, 0.0, -1.0])

    plaquettes = []
    triangles = []
    for k in range(n_theta):
        for j in range(n_phi):
            # (theta, phi) is right-handed about the outward normal
            a, b, c, d = vid(k, j), vid(k + 1, j), vid(k + 1, j + 1), vid(k, j + 1)
            if k == 0:
                plaquettes.append((a, b, c))
                triangles.append((a, b, c))
            elif k == n_theta - 1:
                plaquettes.append((a, b, d))
                triangles.append((a, b, d))
            else:
                plaquettes.append((a, b, c, d))
                triangles.extend([(a, b, c), (a, c, d)])
    simplices = set()
    for t in triangles:
        simplices.add(tuple(sorted(t)))
        for e in itertools.combinations(t, 2):
            simplices.add(tuple(sorted(e)))
    simplices.update((v,) for v in range(len(coords)))
    simplices = _sorted_simplices(simplices)
    edges = tuple(s for s in simplices if len(s) == 2)
    return ParameterComplex(np.array(coords), simplices, "sphere_grid", edges,
                            tuple(plaquettes), (n_theta, n_phi))


def build_general(description) -> ParameterComplex:
    """Complex from ``{"vertices": [[coords]...], "simplices": [[ids]...]}``.

    ``description`` may be a mapping or a JSON string. Every vertex is a
    0-simplex implicitly; every face of dimension >= 1 of a listed simplex must
    itself be listed.
    """
    if isinstance(description, str):
        description = json.loads(description)
    try:
        verts = description["vertices"]
        raw = description.get("simplices", [])
    except (KeyError, TypeError, AttributeError) as exc:
        raise MalformedComplex(f"bad complex description: {exc}") from exc
    coords = np.array([list(map(float, np.atleast_1d(c))) for c in verts], dtype=float)
    if coords.ndim != 2 or len(coords) == 0:
        raise MalformedComplex("vertices must be a nonempty list of coordinate lists")
    simplices = set()
    for s in raw:
        if not isinstance(s, (list, tuple)) or not s:
            raise MalformedComplex(f"bad simplex {s!r}")
        simplices.add(tuple(sorted(int(x) for x in s)))
    _close_check(simplices, len(coords))
    simplices.update((v,) for v in range(len(coords)))
    simplices = _sorted_simplices(simplices)
    edges = tuple(s for s in simplices if len(s) == 2)
    return ParameterComplex(coords, simplices, "general", edges)


@dataclass(frozen=True, eq=False)
class Cover:
    """Closed vertex stars of a complex and the nerve they generate.

    A set of patches spans a nerve simplex when the vertices they share
    induce a connected subgraph with at least one edge, so that every
    overlap carries a connected piece of the 1-skeleton.
    """

    space: ParameterComplex
    patches: tuple[frozenset[int], ...]
    centers: tuple[int, ...]
    nerve_edges: tuple[tuple[int, int], ...]
    nerve_triples: tuple[tuple[int, int, int], ...]

    def overlap(self, *idx: int) -> frozenset[int]:
        out = self.patches[idx[0]]
        for i in idx[1:]:
            out = out & self.patches[i]
        return out

    @cached_property
    def nerve_neighbors(self) -> tuple[tuple[int, ...], ...]:
        nb = [[] for _ in self.patches]
        for i, j in self.nerve_edges:
            nb[i].append(j)
            nb[j].append(i)
        return tuple(tuple(sorted(x)) for x in nb)


def _spans_nerve(space: ParameterComplex, common: frozenset[int]) -> bool:
    return len(common) >= 2 and bool(space.induced_edges(common)) and space.is_connected(common)


def star_cover(X: ParameterComplex) -> Cover:
    if not X.is_connected():
        raise MalformedComplex("star_cover requires a connected complex")
    patches = tuple(X.closed_star(v) for v in range(X.n_vertices))
    n = len(patches)
    edges = []
    candidates = set()
    for v in range(n):
        for w in patches[v]:
            if w > v:
                candidates.add((v, w))
        # stars meeting in an edge have centers within distance 2
        for u in X.neighbors[v]:
            for w in X.neighbors[u]:
                if w > v:
                    candidates.add((v, w))
    for i, j in sorted(candidates):
        if _spans_nerve(X, patches[i] & patches[j]):
            edges.append((i, j))
    adj = [set() for _ in range(n)]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    triples = []
    for i, j in edges:
        for k in sorted(adj[i] & adj[j]):
            if k > j and _spans_nerve(X, patches[i] & patches[j] & patches[k]):
                triples.append((i, j, k))
    return Cover(X, patches, tuple(range(n)), tuple(edges), tuple(triples))


@dataclass(frozen=True, eq=False)
class CechCocycle:
    """Integer 1-cochain on the nerve with its class summary.

    ``values`` holds both orientations of every nerve edge. ``loop_sums``
    are the sums of the cochain around ``cycles``, a cycle basis of the nerve
    graph (for loop covers: the single cycle through patches 0, 1, ..., N-1).
    """

    values: Mapping[tuple[int, int], int]
    is_cocycle: bool
    class_is_zero: bool
    witness: dict[int, int] | None
    cycles: tuple[tuple[int, ...], ...] = ()
    loop_sums: tuple[int, ...] = ()

    def __getitem__(self, key: tuple[int, int]) -> int:
        return self.values[key]

    def summary(self) -> dict:
        return {
            "loop_sums": list(self.loop_sums),
            "class_is_zero": self.class_is_zero,
            "witness": None if self.witness is None else [self.witness[i] for i in sorted(self.witness)],
        }


def cycle_sum(values: Mapping[tuple[int, int], int], cycle: tuple[int, ...]) -> int:
    return sum(values[(cycle[k], cycle[(k + 1) % len(cycle)])] for k in range(len(cycle)))


def coboundary(sigma: Mapping[int, int], cover: Cover) -> dict[tuple[int, int], int]:
    """The 1-cochain ``(i, j) -> sigma_i - sigma_j``."""
    return {(i, j): int(sigma[i]) - int(sigma[j]) for i, j in cover.nerve_edges}


def solve_coboundary(c: Mapping[tuple[int, int], int], cover: Cover) -> CechCocycle:
    """Check the cocycle identity and decide whether ``c`` is a coboundary.

    ``c`` must give a value on every nerve edge in at least one orientation;
    if both orientations are given they must be negatives of each other.
    Triviality is decided by propagating ``sigma_j = sigma_i - c_ij`` along a
    BFS spanning tree of each nerve component and checking the remaining
    edges; their discrepancies are exactly the fundamental-cycle sums.
    """
    values: dict[tuple[int, int], int] = {}
    for i, j in cover.nerve_edges:
        if (i, j) in c:
            v = int(c[(i, j)])
            if (j, i) in c and int(c[(j, i)]) != -v:
                raise ValueError(f"cochain is not antisymmetric on ({i}, {j})")
        elif (j, i) in c:
            v = -int(c[(j, i)])
        else:
            raise ValueError(f"cochain has no value on nerve edge ({i}, {j})")
        values[(i, j)] = v
        values[(j, i)] = -v

    for t in cover.nerve_triples:
        i, j, k = t
        r = values[(i, j)] + values[(j, k)] - values[(i, k)]
        if r != 0:
            raise NotACocycle(t, r)

    n = len(cover.patches)
    sigma: dict[int, int] = {}
    parent: dict[int, int | None] = {}
    for root in range(n):
        if root in sigma:
            continue
        sigma[root] = 0
        parent[root] = None
        queue = deque([root])
        while queue:
            i = queue.popleft()
            for j in cover.nerve_neighbors[i]:
                if j not in sigma:
                    sigma[j] = sigma[i] - values[(i, j)]
                    parent[j] = i
                    queue.append(j)

    cycles = []
    sums = []
    if cover.space.kind == "loop" and len(cover.nerve_edges) == n and n >= 4:
        cyc = tuple(range(n))
        cycles.append(cyc)
        sums.append(cycle_sum(values, cyc))
        zero = sums[0] == 0
    else:
        zero = True
        for a, b in cover.nerve_edges:
            if parent.get(b) == a or parent.get(a) == b:
                continue
            d = values[(a, b)] - (sigma[a] - sigma[b])
            cycles.append(_fundamental_cycle(parent, a, b))
            sums.append(d)
            zero = zero and d == 0
    return CechCocycle(values, True, zero, dict(sigma) if zero else None, tuple(cycles), tuple(sums))


def _fundamental_cycle(parent: Mapping[int, int | None], a: int, b: int) -> tuple[int, ...]:
    """Cycle a -> b -> (tree) -> a, listed without repeating a."""
    path_a = _tree_path(parent, a)
    path_b = _tree_path(parent, b)
    on_a = set(path_a)
    lca = next(x for x in path_b if x in on_a)
    up = path_b[: path_b.index(lca) + 1]
    down = path_a[: path_a.index(lca)][::-1]
    cyc = [a] + up + down
    if cyc[-1] == a:
        cyc.pop()
    return tuple(cyc)


def _tree_path(parent: Mapping[int, int | None], x: int) -> list[int]:
    out = [x]
    while parent[out[-1]] is not None:
        out.append(parent[out[-1]])
    return out
