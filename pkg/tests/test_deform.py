import json

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import random_hermitian
from specflow.deform import (
    FlowObstructed,
    Obstructed,
    Separated,
    _line_chern,
    chern_number,
    flatten,
    make_region,
    position_chern,
    rank_one_push,
    separate,
    separation_report,
)
from specflow.errors import FieldMisaligned, FluxSaturation, IndexCollision
from specflow.exhaustion import Exhaustion, exhaust
from specflow.families import (
    constant,
    frame_bands,
    linear_pauli,
    mickelsson_loop,
    paired_bands,
    pauli_sphere,
    sample,
    vertex_table,
)
from specflow.hermitian import cluster_spectrum, eigh, op_norm
from specflow.spaces import build_loop, build_path, build_sphere_grid, star_cover
from specflow.spectral import components, spectral_graph


def _exhaustion(s, window=None):
    e, _ = exhaust(spectral_graph(s, window), star_cover(s.space))
    assert isinstance(e, Exhaustion)
    return e


def _clusters_at(s, v):
    c = s.spectra[v]
    return list(zip(np.round(c.values, 9).tolist(), c.multiplicities.tolist()))


def _assert_contract(res, region):
    for v in range(res.original.space.n_vertices):
        if v not in region.outer:
            assert res.family.samples[v] is res.original.samples[v]
            assert np.array_equal(res.family.samples[v].entries, res.original.samples[v].entries)
        before, after = res.original.spectra[v].eigenvalues, res.family.spectra[v].eigenvalues
        assert np.all(after >= before - 1e-9)


class TestRegion:
    def test_bump_profile(self):
        R = make_region(build_path(11), [5], rings=2)
        assert R.inner == {5} and R.outer == {3, 4, 5, 6, 7}
        assert np.allclose(R.bump, [0, 0, 0, 1 / 3, 2 / 3, 1, 2 / 3, 1 / 3, 0, 0, 0])

    def test_whole_space(self):
        R = make_region(build_loop(4), range(4))
        assert np.all(R.bump == 1)

    def test_inner_in_outer(self):
        with pytest.raises(ValueError):
            make_region(build_loop(6), [0, 1], outer=[0])


class TestFlatten:
    def test_already_flat(self):
        s = sample(constant(build_loop(6), diagonal=[-1.0, 0.0, 0.0, 2.0]))
        e = _exhaustion(s, (-2, 3))
        R = make_region(s.space, [0, 1, 2], rings=1)
        res = flatten(s, e, R, n=-1)
        for v in R.inner:
            assert op_norm(res.family.samples[v].entries - s.samples[v].entries) < 1e-10
        _assert_contract(res, R)

    def test_near_crossing(self):
        X = build_path(41)
        s = sample(linear_pauli(X, epsilon=0.05))
        e = _exhaustion(s, (-3, 3))
        R = make_region(X, range(18, 23), rings=2)
        res = flatten(s, e, R, n=0)
        _assert_contract(res, R)
        x = X.coords[:, 0]
        for v in R.inner:
            # by hand in the eigenbasis: both eigenvalues move to the upper one
            top = np.sqrt(x[v] ** 2 + 0.05**2)
            assert np.allclose(res.family.samples[v].entries, top * np.eye(2), atol=1e-12)
            assert _clusters_at(res.family, v) == [(round(top, 9), 2)]

    def test_index_collision(self):
        s = sample(constant(build_loop(5), diagonal=[0.0, 0.0, 1.0]))
        e = _exhaustion(s, (-1, 2))
        with pytest.raises(IndexCollision):
            flatten(s, e, make_region(s.space, [0]), n=0)

    def test_homotopy(self):
        X = build_path(21)
        s = sample(linear_pauli(X, epsilon=0.05))
        R = make_region(X, [10], rings=3)
        res = flatten(s, _exhaustion(s, (-3, 3)), R)
        assert res.homotopy(0) is s.samples and res.homotopy(1) is res.family.samples
        mid = res.homotopy(0.5)
        for v in range(21):
            want = (s.samples[v].entries + res.family.samples[v].entries) / 2
            assert np.allclose(mid[v].entries, want, atol=1e-14)
        assert json.loads(res.to_json())["changed"] == sorted(res.changed)


class TestPush:
    def test_zero_matrix(self):
        X = build_loop(3)
        s = sample(constant(X, diagonal=[0.0, 0.0]))
        e = _exhaustion(s, (-1, 3))
        field = {v: np.diag([1.0, 0.0]) for v in range(3)}
        res = rank_one_push(s, field, e, make_region(X, range(3)), n=-1, context={"above": 2.0})
        for D in res.family.samples:
            assert np.array_equal(D.entries, np.diag([1.0, 0.0]).astype(complex))

    def test_after_flatten(self):
        X = build_path(41)
        s = sample(linear_pauli(X, epsilon=0.05))
        e = _exhaustion(s, (-3, 3))
        R = make_region(X, range(16, 25), rings=2)
        flat = flatten(s, e, R)
        e1 = _exhaustion(flat.family, (-3, 3))
        # lower eigenvector of the original 2x2 block, analytic in x
        x = X.coords[:, 0]
        field = {}
        for v in R.outer:
            theta = np.arctan2(0.05, x[v])
            vec = np.array([-np.sin(theta / 2), np.cos(theta / 2)])
            field[v] = np.outer(vec, vec)
        push = rank_one_push(flat.family, field, e1, R)
        _assert_contract(push, R)
        inner = sorted(R.inner)
        gap = [np.diff(push.family.spectra[v].eigenvalues)[0] for v in inner]
        # the virtual neighbour above sits one unit higher, so the push is 1/2
        assert min(gap) >= 0.25 * 1.0

    def test_misaligned(self):
        X = build_loop(3)
        s = sample(constant(X, diagonal=[0.0, 0.0, 5.0]))
        e = _exhaustion(s, (-1, 6))
        with pytest.raises(FieldMisaligned):
            rank_one_push(s, {v: np.diag([0.0, 0.0, 1.0]) for v in range(3)}, e, make_region(X, range(3)), n=-1)

    def test_not_a_projector(self):
        X = build_loop(3)
        s = sample(constant(X, diagonal=[0.0, 0.0]))
        e = _exhaustion(s, (-1, 3))
        with pytest.raises(FieldMisaligned):
            rank_one_push(s, {v: np.eye(2) for v in range(3)}, e, make_region(X, range(3)), n=-1)


class TestChern:
    def test_constant(self):
        g = spectral_graph(sample(constant(build_sphere_grid(8, 8), diagonal=[-1.0, 1.0])), (-2, 2))
        assert [chern_number(g, c) for c in components(g)] == [0, 0]

    @pytest.mark.parametrize("n", [20, 40])
    def test_pauli(self, n):
        g = spectral_graph(sample(pauli_sphere(build_sphere_grid(n, n))), (-2, 2))
        cs = [chern_number(g, c) for c in components(g)]
        assert cs == [-1, 1] and sum(cs) == 0

    def test_position_chern_matches(self):
        s = sample(pauli_sphere(build_sphere_grid(10, 10)))
        assert position_chern(s, [0] * s.space.n_vertices) == -1

    def test_saturation(self):
        X = build_sphere_grid(4, 4)
        vecs = np.tile(np.array([0, 1], dtype=complex), (X.n_vertices, 1))
        vecs[0] = [1, 0]
        with pytest.raises(FluxSaturation):
            _line_chern(X, vecs)

    def test_needs_one_sheet(self):
        g = spectral_graph(sample(constant(build_sphere_grid(4, 4), diagonal=[0.0, 0.0])), (-1, 1))
        with pytest.raises(ValueError):
            chern_number(g, components(g)[0])


class TestSeparate:
    def test_avoided_crossing_loop(self):
        out = separate(sample(linear_pauli(build_loop(64), epsilon=0.1)))
        assert isinstance(out, Separated) and out.gap_section.n == 0
        assert out.min_gap == pytest.approx(0.2)

    def test_exact_crossing_loop(self):
        s = sample(linear_pauli(build_loop(32)))
        out = separate(s)
        assert isinstance(out, Separated) and out.push is not None
        for res in (out.flattening, out.push):
            untouched = set(range(32)) - res.changed
            assert all(res.family.samples[v] is res.original.samples[v] for v in untouched)
        assert out.min_gap > 0.1

    def test_pauli_obstructed(self):
        out = separate(sample(pauli_sphere(build_sphere_grid(20, 20))))
        assert isinstance(out, Obstructed) and abs(out.chern) == 1

    def test_paired_bands_no_push(self):
        out = separate(sample(paired_bands(build_loop(32))))
        assert isinstance(out, Separated) and out.push is None and out.flattening is None
        assert out.min_gap > 1.0

    def test_flow_obstructed(self):
        out = separate(sample(mickelsson_loop(build_loop(32), [1])))
        assert isinstance(out, FlowObstructed) and out.loop_sums == (1,)
        assert separation_report(out) == {"status": "flow_obstructed", "log": list(out.log), "loop_sums": [1]}

    def test_frame_sphere(self):
        s = sample(frame_bands(build_sphere_grid(12, 12), amplitude=5.0, spectator=6.0))
        out = separate(s, 0, window=(-7, 7))
        assert isinstance(out, Separated) and out.min_gap > 1.0
        rep = separation_report(out)
        assert rep["status"] == "separated" and rep["push"]["changed"]

    def test_bad_pair(self):
        with pytest.raises(ValueError):
            separate(sample(constant(build_loop(4), diagonal=[-1.0, 1.0])), n=3)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2))
def test_loop_separation_never_obstructed(seed, shift):
    rng = np.random.default_rng(seed)
    N = 24
    X = build_loop(N)
    a = random_hermitian(rng, 3)
    b = random_hermitian(rng, 3, 0.3)
    mats = [a + np.cos(2 * np.pi * k / N) * b + shift * np.diag([0, 0, 4.0]) for k in range(N)]
    s = sample(vertex_table(X, mats))
    try:
        out = separate(s, 0)
    except (IndexCollision, ValueError):
        assume(False)
    assert not isinstance(out, Obstructed)


@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_flatten_contract(seed, width):
    rng = np.random.default_rng(seed)
    X = build_path(25)
    a, b = random_hermitian(rng, 4), random_hermitian(rng, 4, 0.5)
    mats = [a + x * b for x in X.coords[:, 0]]
    s = sample(vertex_table(X, mats))
    e = _exhaustion(s)
    lo, hi = e.label_range
    n = int(rng.integers(lo, hi))
    start = int(rng.integers(0, 25 - width))
    R = make_region(X, range(start, start + width), rings=2)
    try:
        res = flatten(s, e, R, n)
    except IndexCollision:
        assume(False)
    _assert_contract(res, R)
    for v in R.inner:
        c = cluster_spectrum(eigh(res.family.samples[v]), 1e-9)
        p = e.position(v, n)
        k = int(c.cluster_of_position[p])
        assert k == int(c.cluster_of_position[p + 1]) and c.multiplicities[k] >= 2
