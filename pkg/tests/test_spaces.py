import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specflow.errors import MalformedComplex, NotACocycle
from specflow.spaces import (
    build_general,
    build_loop,
    build_path,
    build_sphere_grid,
    coboundary,
    solve_coboundary,
    star_cover,
)


def _connected(vertices, edges):
    vertices = set(vertices)
    adj = {v: set() for v in vertices}
    for u, v in edges:
        if u in vertices and v in vertices:
            adj[u].add(v)
            adj[v].add(u)
    start = next(iter(vertices))
    seen, queue = {start}, deque([start])
    while queue:
        for w in adj[queue.popleft()] - seen:
            seen.add(w)
            queue.append(w)
    return seen == vertices


class TestComplexes:
    def test_triangle_loop(self):
        X = build_loop(3)
        assert X.n_vertices == 3 and len(X.edges) == 3 and X.kind == "loop"

    def test_loop_too_small(self):
        with pytest.raises(MalformedComplex):
            build_loop(2)

    @pytest.mark.parametrize("n", [(4, 4), (6, 9), (20, 20)])
    def test_sphere_euler(self, n):
        X = build_sphere_grid(*n)
        V, E, F = X.count(0), X.count(1), X.count(2)
        assert V - E + F == 2 == X.euler_characteristic()

    def test_sphere_plaquettes_closed(self):
        X = build_sphere_grid(6, 8)
        uses = {}
        for plaq in X.plaquettes:
            for a, b in zip(plaq, plaq[1:] + plaq[:1]):
                uses.setdefault(frozenset((a, b)), []).append((a, b))
        # every plaquette edge is shared by exactly two plaquettes, with opposite orientation
        assert all(len(u) == 2 and u[0] == u[1][::-1] for u in uses.values())

    def test_general_dangling_face(self):
        with pytest.raises(MalformedComplex):
            build_general({"vertices": [[0], [1], [2]], "simplices": [[0, 1, 2], [0, 1]]})

    def test_general_bad_vertex(self):
        with pytest.raises(MalformedComplex):
            build_general({"vertices": [[0], [1]], "simplices": [[0, 5]]})

    def test_general_from_json(self):
        X = build_general('{"vertices": [[0], [1], [2]], "simplices": [[0, 1], [1, 2]]}')
        assert X.edges == ((0, 1), (1, 2)) and X.is_connected()

    def test_path(self):
        X = build_path(5, -1, 1)
        assert np.allclose(X.coords[:, 0], np.linspace(-1, 1, 5)) and len(X.edges) == 4


class TestStarCover:
    @pytest.mark.parametrize("N", [5, 6, 17])
    def test_loop_nerve_is_cycle(self, N):
        cover = star_cover(build_loop(N))
        assert len(cover.patches) == N and len(cover.nerve_edges) == N and not cover.nerve_triples
        assert all(len(nb) == 2 for nb in cover.nerve_neighbors)

    def test_loop3(self):
        cover = star_cover(build_loop(3))
        assert len(cover.patches) == 3 and len(cover.nerve_edges) == 3 and len(cover.nerve_triples) == 1

    def test_sphere_patches_connected(self):
        X = build_sphere_grid(4, 4)
        cover = star_cover(X)
        assert set().union(*cover.patches) == set(range(X.n_vertices))
        assert all(_connected(p, X.edges) for p in cover.patches)

    def test_disconnected(self):
        X = build_general({"vertices": [[0], [1], [2]], "simplices": [[0, 1]]})
        with pytest.raises(MalformedComplex):
            star_cover(X)


def _brute_force_witness(N, c, bound=3):
    """Search every integer 0-cochain with entries in [-bound, bound]."""
    for sigma in itertools.product(range(-bound, bound + 1), repeat=N - 1):
        s = (0,) + sigma
        if all(c[(i, j)] == s[i] - s[j] for i, j in c):
            return s
    return None


class TestCoboundary:
    def test_zero(self):
        cover = star_cover(build_loop(6))
        r = solve_coboundary({e: 0 for e in cover.nerve_edges}, cover)
        assert r.is_cocycle and r.class_is_zero and set(r.witness.values()) == {0}

    def test_single_unit(self):
        N = 5
        cover = star_cover(build_loop(N))
        c = {e: 0 for e in cover.nerve_edges}
        c[cover.nerve_edges[0]] = 1
        r = solve_coboundary(c, cover)
        assert r.is_cocycle and not r.class_is_zero and r.witness is None
        assert abs(r.loop_sums[0]) == 1
        assert _brute_force_witness(N, c) is None

    def test_cancelling_pair(self):
        N = 5
        cover = star_cover(build_loop(N))
        c = {e: 0 for e in cover.nerve_edges}
        c[cover.nerve_edges[0]] = 1
        c[cover.nerve_edges[2]] = -1
        r = solve_coboundary(c, cover)
        assert r.class_is_zero
        assert all(c[(i, j)] == r.witness[i] - r.witness[j] for i, j in c)
        assert _brute_force_witness(N, c) is not None

    def test_antisymmetry(self):
        cover = star_cover(build_loop(5))
        c = {e: k for k, e in enumerate(cover.nerve_edges)}
        r = solve_coboundary(c, cover)
        assert all(r[(i, j)] == -r[(j, i)] for i, j in cover.nerve_edges)

    def test_inconsistent_orientations(self):
        cover = star_cover(build_loop(5))
        c = {e: 0 for e in cover.nerve_edges}
        i, j = cover.nerve_edges[0]
        c[(j, i)] = 1
        with pytest.raises(ValueError):
            solve_coboundary(c, cover)

    def test_not_a_cocycle(self):
        cover = star_cover(build_loop(3))
        c = {e: 0 for e in cover.nerve_edges}
        c[cover.nerve_edges[0]] = 1
        with pytest.raises(NotACocycle):
            solve_coboundary(c, cover)

    def test_sphere_coboundary(self):
        X = build_sphere_grid(4, 6)
        cover = star_cover(X)
        sigma = {i: (7 * i) % 5 - 2 for i in range(len(cover.patches))}
        r = solve_coboundary(coboundary(sigma, cover), cover)
        assert r.is_cocycle and r.class_is_zero and all(s == 0 for s in r.loop_sums)


@given(st.integers(min_value=3, max_value=30), st.data())
def test_coboundaries_are_trivial(N, data):
    cover = star_cover(build_loop(N))
    sigma = {i: data.draw(st.integers(-50, 50)) for i in range(N)}
    r = solve_coboundary(coboundary(sigma, cover), cover)
    assert r.class_is_zero
    # the witness differs from sigma by a constant
    assert len({r.witness[i] - sigma[i] for i in range(N)}) == 1


@given(st.integers(min_value=4, max_value=30), st.data())
def test_loop_class_zero_iff_sum_zero(N, data):
    cover = star_cover(build_loop(N))
    c = {e: data.draw(st.integers(-3, 3)) for e in cover.nerve_edges}
    r = solve_coboundary(c, cover)
    assert r.class_is_zero == (r.loop_sums[0] == 0)
    cyc = r.cycles[0]
    assert r.loop_sums[0] == sum(r[(cyc[k], cyc[(k + 1) % len(cyc)])] for k in range(len(cyc)))
