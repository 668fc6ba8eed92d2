"""Unitary matrices to first-order operators with twisted boundary condition.

For ``U`` in ``U(n)`` the operator ``(1/2pi)(-i d/dx)`` on ``[0, 1]`` with
``xi(1) = U xi(0)`` has spectrum ``{m + lambda_j}``, where
``exp(2 pi i lambda_j)`` runs over the eigenvalues of ``U``. After the gauge
transformation ``xi(x) = exp(2 pi i x Lambda) eta(x)`` with
``Lambda = (-i log U)/2pi`` (principal branch, eigenvalues in ``[0, 1)``), the
boundary condition becomes periodic and the operator is diagonal over Fourier
modes: ``m I_n + Lambda`` on mode ``m``. Truncating to ``|m| <= M`` gives a
finite Hermitian matrix whose spectrum is exact, except that modes near the
cutoff lose their neighbours; only ``(-M+1, M-1)`` is trusted.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import schur

from .errors import DimensionMismatch, LogBranchDegeneracy, PhaseStepTooLarge
from .hermitian import HermitianOperator

BRANCH_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("unitary must be square")
        resid = float(np.linalg.norm(a.conj().T @ a - np.eye(len(a)), 2))
        if resid > 1e-10 * len(a):
            raise ValueError(f"matrix is not unitary (residual {resid:.2e})")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "unitarity_residual", resid)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def _schur(self):
        # U is normal, so its complex Schur form is diagonal up to roundoff
        t, z = schur(self.entries, output="complex")
        return np.diag(t), z

    @cached_property
    def eigenphases(self) -> np.ndarray:
        """``lambda_j`` in ``[0, 1)``, ascending."""
        return np.sort(_phases(self._schur[0]))

    def log_generator(self) -> np.ndarray:
        """Hermitian ``Lambda`` with ``exp(2 pi i Lambda) = U`` and spectrum in ``[0, 1)``."""
        z, q = self._schur
        lam = _phases(z)
        out = (q * lam) @ q.conj().T
        return (out + out.conj().T) / 2


def _phases(z: np.ndarray) -> np.ndarray:
    lam = np.mod(np.angle(z) / (2 * math.pi), 1.0)
    lam[lam >= 1.0] = 0.0
    return lam


def random_unitary(n: int, seed: int) -> np.ndarray:
    """Haar-distributed unitary from a seeded generator (QR of a Ginibre matrix)."""
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def mickelsson_spectrum(U: UnitaryMatrix, window: tuple[float, float]) -> list[tuple[float, int]]:
    """All ``m + lambda_j`` in the open window, merged by value, with multiplicities."""
    lo, hi = window
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("mickelsson_spectrum needs a bounded window")
    vals = []
    for lam in U.eigenphases:
        for m in range(math.floor(lo - lam), math.ceil(hi - lam) + 1):
            v = m + lam
            if lo < v < hi:
                vals.append(v)
    vals.sort()
    out: list[tuple[float, int]] = []
    for v in vals:
        if out and abs(v - out[-1][0]) <= 1e-9:
            out[-1] = (out[-1][0], out[-1][1] + 1)
        else:
            out.append((v, 1))
    return out


@dataclass(frozen=True, eq=False)
class MickelssonRealization:
    U: UnitaryMatrix
    M: int
    matrix: HermitianOperator

    @property
    def safe_window(self) -> tuple[float, float]:
        return (-self.M + 1.0, self.M - 1.0)


def mickelsson_truncate(U: UnitaryMatrix, M: int, strict: bool = False) -> MickelssonRealization:
    """Block-diagonal truncation ``diag_m(m I_n) + I (x) Lambda`` over modes ``|m| <= M``.

    With ``strict=True`` an eigenvalue of ``U`` within ``1e-12`` of 1 raises,
    since there the principal logarithm is about to jump by a full period.
    """
    if M < 2:
        raise ValueError("mode cutoff M must be at least 2")
    if strict:
        z = U._schur[0]
        if np.any(np.abs(z - 1) < BRANCH_EPS):
            raise LogBranchDegeneracy("U has an eigenvalue at the branch cut of the logarithm")
    n = U.dim
    lam = U.log_generator()
    modes = np.arange(-M, M + 1, dtype=float)
    mat = np.kron(np.diag(modes), np.eye(n)) + np.kron(np.eye(2 * M + 1), lam)
    return MickelssonRealization(U, M, HermitianOperator(mat))


def lift_unitary_family(space, Us: Sequence[UnitaryMatrix] | Mapping[int, UnitaryMatrix], M: int):
    """Vertex-table family of truncated Mickelsson operators.

    Continuity is spectral: the principal logarithm may jump across an edge,
    so downstream matching uses the sorted spectra inside the safe window.
    """
    from .families import vertex_table

    if isinstance(Us, Mapping):
        Us = [Us[v] for v in range(space.n_vertices)]
    Us = [u if isinstance(u, UnitaryMatrix) else UnitaryMatrix(u) for u in Us]
    if len({u.dim for u in Us}) != 1:
        raise DimensionMismatch("all unitaries must have the same size")
    mats = [mickelsson_truncate(u, M).matrix for u in Us]
    return vertex_table(space, mats, continuity="spectral", trusted_window=(-M + 1.0, M - 1.0),
                        name="mickelsson_lift", params={"M": M, "n": Us[0].dim})


def det_winding(Us: Iterable[UnitaryMatrix]) -> int:
    """Winding number of ``det U`` around a closed loop of samples."""
    dets = [np.linalg.det(u.entries if isinstance(u, UnitaryMatrix) else np.asarray(u)) for u in Us]
    if not dets:
        return 0
    total = 0.0
    for a, b in zip(dets, dets[1:] + dets[:1]):
        step = float(np.angle(b / a))
        if abs(step) >= math.pi / 2:
            raise PhaseStepTooLarge(f"determinant phase step {step:.3f} rad; sample the loop more finely")
        total += step
    return int(round(total / (2 * math.pi)))


def spectrum_csv(U: UnitaryMatrix, window: tuple[float, float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "multiplicity"])
    for v, m in mickelsson_spectrum(U, window):
        w.writerow([f"{v:.12g}", m])
    return buf.getvalue()
