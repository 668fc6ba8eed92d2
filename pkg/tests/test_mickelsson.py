import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specflow.errors import DimensionMismatch, LogBranchDegeneracy, PhaseStepTooLarge
from specflow.exhaustion import spectral_flow_crossings
from specflow.families import mickelsson_loop, sample
from specflow.hermitian import cluster_spectrum, eigh
from specflow.mickelsson import (
    UnitaryMatrix,
    det_winding,
    lift_unitary_family,
    mickelsson_spectrum,
    mickelsson_truncate,
    random_unitary,
    spectrum_csv,
)
from specflow.spaces import build_loop
from specflow.spectral import spectral_graph


def _phase_loop(w, N):
    return [UnitaryMatrix(np.diag(np.exp(2j * math.pi * np.asarray(w) * k / N))) for k in range(N)]


def _in_window(matrix, window):
    c = cluster_spectrum(eigh(matrix))
    lo, hi = window
    return [(float(v), int(m)) for v, m in zip(c.values, c.multiplicities) if lo < v < hi]


class TestUnitary:
    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            UnitaryMatrix(np.array([[2.0]]))

    def test_residual(self):
        U = UnitaryMatrix(random_unitary(4, 3))
        assert U.unitarity_residual <= 1e-10 * 4

    def test_eigenphases(self):
        U = UnitaryMatrix(np.diag([1, 1j, -1, -1j]))
        assert np.allclose(U.eigenphases, [0, 0.25, 0.5, 0.75])

    def test_log_generator(self):
        U = UnitaryMatrix(random_unitary(3, 11))
        lam = U.log_generator()
        w, v = np.linalg.eigh(lam)
        assert np.all((w >= 0) & (w < 1))
        assert np.allclose((v * np.exp(2j * math.pi * w)) @ v.conj().T, U.entries, atol=1e-12)


class TestSpectrum:
    def test_identity(self):
        assert mickelsson_spectrum(UnitaryMatrix(np.eye(1)), (-2.5, 2.5)) == [(float(m), 1) for m in range(-2, 3)]

    def test_minus_identity(self):
        out = mickelsson_spectrum(UnitaryMatrix(-np.eye(2)), (-1, 2))
        assert [(round(v, 12), m) for v, m in out] == [(-0.5, 2), (0.5, 2), (1.5, 2)]

    def test_unit_interval_count(self):
        U = UnitaryMatrix(random_unitary(3, 5))
        for a in (-2.3, 0.1, 4.7):
            assert sum(m for _, m in mickelsson_spectrum(U, (a, a + 1))) == 3

    def test_unbounded_window(self):
        with pytest.raises(ValueError):
            mickelsson_spectrum(UnitaryMatrix(np.eye(1)), (-math.inf, 0))

    def test_csv(self):
        lines = spectrum_csv(UnitaryMatrix(-np.eye(1)), (0, 2)).splitlines()
        assert lines == ["value,multiplicity", "0.5,1", "1.5,1"]


class TestTruncate:
    def test_identity(self):
        r = mickelsson_truncate(UnitaryMatrix(np.eye(1)), 3)
        assert np.array_equal(np.linalg.eigvalsh(r.matrix.entries), np.arange(-3, 4))

    def test_minus_identity(self):
        r = mickelsson_truncate(UnitaryMatrix(-np.eye(2)), 3)
        w = np.linalg.eigvalsh(r.matrix.entries)
        assert np.allclose(w, np.repeat(np.arange(-3, 4) + 0.5, 2), atol=1e-9)

    def test_cross_check(self):
        U = UnitaryMatrix(random_unitary(3, 21))
        r = mickelsson_truncate(U, 5)
        got = _in_window(r.matrix, r.safe_window)
        want = mickelsson_spectrum(U, r.safe_window)
        assert len(got) == len(want)
        assert all(abs(a[0] - b[0]) < 1e-9 and a[1] == b[1] for a, b in zip(got, want))

    def test_cutoff(self):
        with pytest.raises(ValueError):
            mickelsson_truncate(UnitaryMatrix(np.eye(1)), 1)

    def test_strict_branch(self):
        U = UnitaryMatrix(np.diag([1.0, -1.0]))
        mickelsson_truncate(U, 3)
        with pytest.raises(LogBranchDegeneracy):
            mickelsson_truncate(U, 3, strict=True)


class TestLift:
    def test_constant(self):
        f = lift_unitary_family(build_loop(5), [np.eye(2)] * 5, 4)
        s = sample(f)
        assert s.max_step == 0 and s.resolution_ok

    def test_single_winding(self):
        N = 30
        s = sample(lift_unitary_family(build_loop(N), _phase_loop([1], N), 8))
        assert spectral_flow_crossings(s, 0.25) == 1

    def test_opposite_windings(self):
        N = 64
        s = sample(lift_unitary_family(build_loop(N), _phase_loop([1, -2], N), 8))
        assert spectral_flow_crossings(s, 0.2371) == -1

    def test_mapping_input(self):
        Us = {k: u for k, u in enumerate(_phase_loop([1], 6))}
        f = lift_unitary_family(build_loop(6), Us, 3)
        assert f.dim == 7 and f.continuity == "spectral"

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            lift_unitary_family(build_loop(3), [np.eye(1), np.eye(2), np.eye(1)], 3)

    def test_minimal_multiplicity_loops(self):
        for w in ([1], [-1], [2]):
            s = sample(mickelsson_loop(build_loop(64), w))
            g = spectral_graph(s)
            assert all(set(g.per_sample[v].multiplicities[g.window_clusters(v)]) == {1} for v in range(64))


class TestDetWinding:
    def test_constant(self):
        assert det_winding([UnitaryMatrix(np.eye(2))] * 6) == 0

    def test_single(self):
        assert det_winding(_phase_loop([1], 16)) == 1

    def test_additive(self):
        assert det_winding(_phase_loop([1, -2], 16)) == -1

    def test_coarse(self):
        with pytest.raises(PhaseStepTooLarge):
            det_winding(_phase_loop([1], 3))


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_truncation_matches_closed_form(seed, n):
    U = UnitaryMatrix(random_unitary(n, seed))
    r = mickelsson_truncate(U, 8)
    got = _in_window(r.matrix, r.safe_window)
    want = mickelsson_spectrum(U, r.safe_window)
    assert [m for _, m in got] == [m for _, m in want]
    assert np.allclose([v for v, _ in got], [v for v, _ in want], atol=1e-9, rtol=0)
    assert max(m for _, m in got) <= n
