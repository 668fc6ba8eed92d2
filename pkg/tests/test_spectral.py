import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specflow.errors import IsolationFailure, NotConstantMultiplicity, WindowUnsafe
from specflow.families import (
    constant,
    linear_pauli,
    mickelsson_loop,
    paired_bands,
    pauli_sphere,
    sample,
    sample_matrices,
    vertex_table,
)
from specflow.hermitian import HermitianOperator
from specflow.spaces import build_loop, build_path, build_sphere_grid
from specflow.spectral import canonical_window, components, graph_csv, projection_field, spectral_graph


def _graph(f, window=None):
    return spectral_graph(sample(f), window)


class TestSpectralGraph:
    def test_constant_two_branches(self):
        g = _graph(constant(build_loop(8), diagonal=[-1.0, 1.0]), (-2, 2))
        assert g.boundary_safe
        for v in range(8):
            c = g.per_sample[v]
            assert c.values.tolist() == [-1.0, 1.0] and c.multiplicities.tolist() == [1, 1]
        assert all(seg == ((0, 0), (1, 1)) for seg in g.branch_segments)

    def test_avoided_crossing_closed_form(self):
        X = build_path(41)
        g = _graph(linear_pauli(X, epsilon=0.1), (-3, 3))
        x = X.coords[:, 0]
        exact = np.sqrt(x**2 + 0.01)
        for v in range(41):
            c = g.per_sample[v]
            assert c.multiplicities.tolist() == [1, 1]
            assert np.allclose(c.values, [-exact[v], exact[v]], atol=1e-12)
        assert min(np.diff(c.values)[0] for c in g.per_sample) == pytest.approx(0.2)

    def test_pauli_clusters(self):
        g = _graph(pauli_sphere(build_sphere_grid(8, 8)), (-2, 2))
        for c in g.per_sample:
            assert np.allclose(c.values, [-1, 1]) and c.multiplicities.tolist() == [1, 1]

    def test_window_unsafe(self):
        with pytest.raises(WindowUnsafe) as err:
            _graph(constant(build_loop(4), diagonal=[-1.0, 1.0]), (-1.0 + 1e-10, 2))
        assert err.value.value == -1.0

    def test_window_outside_trust(self):
        with pytest.raises(ValueError):
            _graph(mickelsson_loop(build_loop(8), [1], M=4), (-5, 5))

    def test_default_window_clear_of_spectrum(self):
        g = _graph(mickelsson_loop(build_loop(16), [1]))
        lo, hi = g.window
        assert -7 < lo < -6.5 and 6.5 < hi < 7
        assert g.boundary_safe is False  # branches drift through the window edges

    def test_total_multiplicity_constant_when_safe(self):
        g = _graph(paired_bands(build_loop(16)), (-3, 3))
        assert g.boundary_safe and set(g.total_multiplicity) == {4}


class TestCanonicalWindow:
    def test_constant(self):
        g = _graph(constant(build_loop(8), diagonal=[0.0, 0.0, 1.0]), (-1, 2))
        cw = canonical_window(g, 3, 0)
        assert cw.base == frozenset(range(8)) and cw.total_multiplicity == 2

    def test_crossing_vertex(self):
        X = build_path(41)
        g = _graph(linear_pauli(X), (-3, 3))
        v0 = int(np.argmin(np.abs(X.coords[:, 0])))
        cw = canonical_window(g, v0, 0)
        assert cw.total_multiplicity == 2 and v0 in cw.base
        lo, hi = cw.interval
        for v in cw.base:
            w = g.per_sample[v].eigenvalues
            assert np.count_nonzero((w > lo) & (w < hi)) == 2

    def test_disjoint_intervals(self):
        g = _graph(constant(build_loop(6), diagonal=[-1.0, 0.0, 0.5, 3.0]), (-2, 4))
        ivs = sorted(canonical_window(g, 0, k).interval for k in range(4))
        assert all(a[1] <= b[0] for a, b in zip(ivs, ivs[1:]))

    def test_isolation_failure(self):
        X = build_loop(3)
        D = HermitianOperator(np.diag([0.0, 3e-9, 1.0]))
        g = spectral_graph(sample_matrices(X, [D] * 3), (-1, 2))
        with pytest.raises(IsolationFailure):
            canonical_window(g, 0, 0)

    def test_bad_index(self):
        g = _graph(constant(build_loop(4), diagonal=[0.0, 1.0]), (-1, 2))
        with pytest.raises(IndexError):
            canonical_window(g, 0, 5)


class TestComponents:
    def test_constant_two_coverings(self):
        comps = components(_graph(constant(build_loop(8), diagonal=[0.0, 1.0]), (-1, 2)))
        assert [(c.is_covering, c.sheet_count) for c in comps] == [(True, 1), (True, 1)]

    def test_mickelsson_drifts_out(self):
        comps = components(_graph(mickelsson_loop(build_loop(32), [1])))
        assert len(comps) == 1
        assert comps[0].touches_boundary and not comps[0].is_covering

    def test_pauli_two_coverings(self):
        comps = components(_graph(pauli_sphere(build_sphere_grid(8, 8)), (-2, 2)))
        assert [(c.is_covering, c.sheet_count) for c in comps] == [(True, 1), (True, 1)]

    def test_exact_crossing_merges(self):
        comps = components(_graph(linear_pauli(build_path(41)), (-3, 3)))
        assert len(comps) == 1 and not comps[0].is_covering
        assert set(comps[0].multiplicity_profile.values()) == {1, 2}

    def test_csv(self):
        g = _graph(constant(build_loop(4), diagonal=[0.0, 1.0]), (-1, 2))
        rows = list(csv.reader(io.StringIO(graph_csv(g))))
        assert rows[0] == ["sample_id", "coordinates", "cluster_value", "multiplicity", "component_id"]
        assert len(rows) == 1 + 8 and {r[4] for r in rows[1:]} == {"0", "1"}


class TestProjectionField:
    def test_constant(self):
        g = _graph(constant(build_loop(8), diagonal=[0.0, 1.0]), (-1, 2))
        for comp in components(g):
            assert projection_field(g, comp).continuity_modulus == 0

    def test_avoided_crossing_shrinks(self):
        moduli = []
        for N in (41, 161):
            g = _graph(linear_pauli(build_path(N), epsilon=0.1), (-3, 3))
            comp = components(g)[0]
            pf = projection_field(g, comp)
            assert pf.continuity_modulus <= 4 * g.sampled.max_step / 0.2
            moduli.append(pf.continuity_modulus)
        assert moduli[1] < moduli[0] / 2

    def test_exact_crossing_jump(self):
        g = _graph(linear_pauli(build_path(41)), (-3, 3))
        with pytest.raises(NotConstantMultiplicity) as err:
            projection_field(g, components(g)[0])
        assert err.value.jump >= 0.99

    def test_unsampled_crossing_caught(self):
        # even N: the crossing at x = 0 falls between samples
        g = _graph(linear_pauli(build_path(40)), (-3, 3))
        comps = components(g)
        assert all(c.has_constant_multiplicity for c in comps)
        with pytest.raises(NotConstantMultiplicity) as err:
            projection_field(g, comps[0])
        assert err.value.jump >= 0.99

    def test_paired_bands_rank_two(self):
        g = _graph(paired_bands(build_loop(32)), (-3, 3))
        for comp in components(g):
            pf = projection_field(g, comp)
            assert all(abs(np.trace(P).real - 2) < 1e-9 for P in pf.projectors)


@given(st.integers(0, 2**32 - 1), st.integers(3, 12))
def test_fiber_count_identity(seed, N):
    rng = np.random.default_rng(seed)
    X = build_loop(N)
    base = np.sort(rng.integers(-3, 4, size=4)).astype(float)
    mats = [np.diag(base + 0.05 * np.sin(2 * math.pi * k / N + np.arange(4))) for k in range(N)]
    g = spectral_graph(sample(vertex_table(X, mats)), (-5, 5))
    comps = components(g)
    for v in range(N):
        total = sum(comp.multiplicity_profile[(v, k)] for comp in comps for k in comp.clusters_at(v))
        assert total == g.total_multiplicity[v]
    for comp in comps:
        if comp.is_covering:
            assert all(len(comp.clusters_at(v)) == comp.sheet_count for v in range(N))


@given(st.floats(0.02, 0.5), st.integers(9, 60))
def test_multiplicity_dichotomy(eps, N):
    g = spectral_graph(sample(linear_pauli(build_path(N), epsilon=eps)), (-3, 3))
    comps = components(g)
    for comp in comps:
        if comp.is_covering and comp.has_constant_multiplicity:
            try:
                pf = projection_field(g, comp)
            except NotConstantMultiplicity:
                # only an under-sampled gap may refuse; then some step reaches half the gap
                assert g.sampled.max_step >= 2 * eps / 2
            else:
                assert pf.continuity_modulus <= pf.bound + 1e-12
