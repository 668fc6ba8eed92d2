"""Dense Hermitian linear algebra: eigendecomposition, eigenvalue clustering,
spectral projections and functional calculus.

Every other module goes through these functions, so tolerances live here as
explicit keyword arguments with module-level defaults.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AmbiguousClustering,
    BoundaryEigenvalue,
    DomainError,
    NonConvergence,
    ToleranceError,
)

TOL_EIG = 1e-10
DEFAULT_CLUSTER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A dense Hermitian matrix; symmetrized on construction and read-only."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a nonempty square matrix, got shape {a.shape}")
        a = (a + a.conj().T) / 2
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def norm(self) -> float:
        """Operator norm."""
        return float(np.linalg.norm(self.entries, 2))

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.entries + other.entries)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.entries - other.entries)

    def scaled(self, c: float) -> "HermitianOperator":
        return HermitianOperator(c * self.entries)


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def orthonormality_error(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v.conj().T @ v - np.eye(self.dim))))

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    # largest component of each column made real positive (first one on ties)
    idx = np.argmax(np.abs(vecs) - 1e-12 * np.arange(vecs.shape[0])[:, None], axis=0)
    ph = vecs[idx, np.arange(vecs.shape[1])]
    ph = ph / np.abs(ph)
    return vecs / ph


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: n-1 rounds of disjoint index pairs covering every pair once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            p, q = players[k], players[m - 1 - k]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a: np.ndarray, max_sweeps: int | None = None, tol: float = 1e-15):
    """Cyclic Jacobi for complex Hermitian matrices.

    Rotations inside one tournament round act on disjoint index pairs and are
    applied together. Returns unsorted (eigenvalues, eigenvectors).
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    if n == 1:
        return a.real.diagonal().copy(), v
    if max_sweeps is None:
        max_sweeps = 64 * n * n
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= tol * scale:
            return a.real.diagonal().copy(), v
        for P, Q in rounds:
            apq = a[P, Q]
            mag = np.abs(apq)
            active = mag > tol * scale * 1e-3
            if not active.any():
                continue
            P, Q, apq, mag = P[active], Q[active], apq[active], mag[active]
            phase = apq / mag
            app = a[P, P].real
            aqq = a[Q, Q].real
            theta = (aqq - app) / (2 * mag)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1))
            t[theta == 0] = 1.0
            c = 1 / np.sqrt(t * t + 1)
            s = t * c
            # columns: A <- A G with G = [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
            cp, cq = a[:, P].copy(), a[:, Q].copy()
            pc = np.conj(phase)
            a[:, P] = c * cp - s * pc * cq
            a[:, Q] = s * cp + c * pc * cq
            rp, rq = a[P, :].copy(), a[Q, :].copy()
            a[P, :] = c[:, None] * rp - (s * phase)[:, None] * rq
            a[Q, :] = s[:, None] * rp + (c * phase)[:, None] * rq
            a[P, Q] = 0
            a[Q, P] = 0
            vp, vq = v[:, P].copy(), v[:, Q].copy()
            v[:, P] = c * vp - s * pc * vq
            v[:, Q] = s * vp + c * pc * vq
        a = (a + a.conj().T) / 2
    raise NonConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")


def eigh(D: HermitianOperator, method: str = "lapack") -> EigenDecomposition:
    """Full eigendecomposition with ascending eigenvalues.

    ``method="lapack"`` uses the LAPACK driver behind :func:`numpy.linalg.eigh`;
    ``method="jacobi"`` uses :func:`jacobi_eigh`. Eigenvector phases are fixed
    so the output is a deterministic function of the input bits.
    """
    a = D.entries
    if method == "lapack":
        try:
            w, v = np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(str(exc)) from exc
    elif method == "jacobi":
        w, v = jacobi_eigh(a)
        order = np.argsort(w, kind="stable")
        w, v = w[order], v[:, order]
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    v = _fix_phases(v)
    residual = float(np.max(np.linalg.norm(a @ v - v * w, axis=0)))
    return EigenDecomposition(np.asarray(w, dtype=float), v, residual)


@dataclass(frozen=True, eq=False)
class Cluster:
    value: float
    multiplicity: int
    vectors: np.ndarray  # dim x multiplicity, orthonormal columns

    @property
    def projector(self) -> np.ndarray:
        return self.vectors @ self.vectors.conj().T


@dataclass(frozen=True, eq=False)
class ClusteredSpectrum:
    """Eigenvalues grouped into clusters; cluster k covers sorted positions
    ``starts[k] .. starts[k] + multiplicities[k] - 1``."""

    eig: EigenDecomposition
    starts: np.ndarray
    multiplicities: np.ndarray
    values: np.ndarray
    cluster_tol: float

    @property
    def dim(self) -> int:
        return self.eig.dim

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig.eigenvalues

    def __len__(self) -> int:
        return len(self.values)

    @cached_property
    def cluster_of_position(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.values)), self.multiplicities)

    def cluster(self, k: int) -> Cluster:
        s, m = int(self.starts[k]), int(self.multiplicities[k])
        return Cluster(float(self.values[k]), m, self.eig.eigenvectors[:, s:s + m])

    @property
    def clusters(self) -> list[Cluster]:
        return [self.cluster(k) for k in range(len(self.values))]

    def positions(self, k: int) -> range:
        s = int(self.starts[k])
        return range(s, s + int(self.multiplicities[k]))

    def gaps(self) -> np.ndarray:
        return np.diff(self.values)


def cluster_spectrum(eig: EigenDecomposition, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> ClusteredSpectrum:
    """Greedy gap clustering of a sorted spectrum.

    A new cluster starts wherever consecutive eigenvalues differ by more than
    ``cluster_tol``. Gaps inside ``(cluster_tol/2, 2*cluster_tol)`` are
    ambiguous and raise.
    """
    if not cluster_tol > 10 * eig.residual:
        raise ToleranceError(
            f"cluster_tol {cluster_tol:.3e} must exceed 10x the eigen residual {eig.residual:.3e}"
        )
    w = eig.eigenvalues
    d = np.diff(w)
    bad = (d > cluster_tol / 2) & (d < 2 * cluster_tol)
    if bad.any():
        raise AmbiguousClustering(float(d[bad][0]), cluster_tol)
    breaks = np.flatnonzero(d > cluster_tol) + 1
    starts = np.concatenate([[0], breaks]).astype(int)
    ends = np.concatenate([breaks, [len(w)]]).astype(int)
    mults = ends - starts
    values = np.add.reduceat(w, starts) / mults
    return ClusteredSpectrum(eig, starts, mults, values, cluster_tol)


def spectral_projection(D: HermitianOperator, interval: tuple[float, float],
                        eig: EigenDecomposition | None = None) -> np.ndarray:
    """Orthogonal projection onto the eigenvectors with eigenvalue in the open interval."""
    lo, hi = interval
    if eig is None:
        eig = eigh(D)
    w = eig.eigenvalues
    margin = 10 * TOL_EIG * (1 + D.norm)
    near = np.minimum(np.abs(w - lo), np.abs(w - hi)) <= margin
    if near.any():
        raise BoundaryEigenvalue(f"eigenvalue {w[near][0]!r} within {margin:.1e} of {interval}")
    v = eig.eigenvectors[:, (w > lo) & (w < hi)]
    return v @ v.conj().T


class PiecewiseLinear:
    """Continuous piecewise-linear function through ``(knots[i], values[i])``.

    Outside the knots the function extends with the given slopes; a slope of
    ``None`` leaves that side outside the domain.
    """

    def __init__(self, knots: Sequence[float], values: Sequence[float],
                 left_slope: float | None = None, right_slope: float | None = None):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.knots.ndim != 1 or self.knots.shape != self.values.shape or len(self.knots) < 1:
            raise ValueError("knots and values must be equal-length 1-d sequences")
        if np.any(np.diff(self.knots) < 0):
            raise ValueError("knots must be nondecreasing")
        self.left_slope = left_slope
        self.right_slope = right_slope

    @property
    def domain(self) -> tuple[float, float]:
        lo = -math.inf if self.left_slope is not None else float(self.knots[0])
        hi = math.inf if self.right_slope is not None else float(self.knots[-1])
        return lo, hi

    def sup_norm(self) -> float:
        if self.left_slope or self.right_slope:
            return math.inf
        return float(np.max(np.abs(self.values)))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.knots, self.values)
        if self.left_slope is not None:
            below = t < self.knots[0]
            out = np.where(below, self.values[0] + self.left_slope * (t - self.knots[0]), out)
        if self.right_slope is not None:
            above = t > self.knots[-1]
            out = np.where(above, self.values[-1] + self.right_slope * (t - self.knots[-1]), out)
        return out


def functional_calculus(D: HermitianOperator, f: Callable, eig: EigenDecomposition | None = None,
                        domain: tuple[float, float] | None = None) -> HermitianOperator:
    """Return ``sum_i f(lambda_i) P_i`` for a real function ``f``.

    ``domain`` defaults to ``f.domain`` when present, else the real line.
    """
    if eig is None:
        eig = eigh(D)
    if domain is None:
        domain = getattr(f, "domain", (-math.inf, math.inf))
    w = eig.eigenvalues
    lo, hi = domain
    outside = (w < lo) | (w > hi)
    if outside.any():
        raise DomainError(f"eigenvalue {w[outside][0]!r} outside the domain {domain}")
    fw = np.asarray(f(w), dtype=float)
    v = eig.eigenvectors
    return HermitianOperator((v * fw) @ v.conj().T)


def chi(t):
    """Bounded transform t (1 + t^2)^(-1/2)."""
    t = np.asarray(t, dtype=float)
    return t / np.sqrt(1 + t * t)


def bounded_transform(D: HermitianOperator) -> HermitianOperator:
    return functional_calculus(D, chi)


def op_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2))
