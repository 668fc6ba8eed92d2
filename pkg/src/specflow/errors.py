"""Exception hierarchy.

Mathematical obstructions (nonzero spectral flow, nonzero Chern number) are
*not* exceptions; they are returned as values. Everything here signals either
bad input, a numerical condition the caller has to resolve (refine, shift a
window, perturb a level), or an internal defect.
"""
from __future__ import annotations


class SpecflowError(Exception):
    """Base class for all package errors."""


# hermitian
class NonConvergence(SpecflowError):
    pass


class ToleranceError(SpecflowError):
    pass


class AmbiguousClustering(SpecflowError):
    def __init__(self, gap: float, cluster_tol: float):
        super().__init__(
            f"eigenvalue gap {gap:.3e} lies in ({cluster_tol / 2:.3e}, {2 * cluster_tol:.3e}); "
            "refine cluster_tol"
        )
        self.gap = gap
        self.cluster_tol = cluster_tol


class BoundaryEigenvalue(SpecflowError):
    pass


class DomainError(SpecflowError):
    pass


# spaces
class MalformedComplex(SpecflowError):
    pass


class NotACocycle(SpecflowError):
    def __init__(self, triple, residual: int):
        super().__init__(f"cocycle identity fails on nerve triple {triple} (residual {residual})")
        self.triple = triple
        self.residual = residual


# families
class OutsideComplex(SpecflowError):
    pass


class ResolutionBudgetExceeded(SpecflowError):
    def __init__(self, region, samples: int):
        super().__init__(
            f"sampling budget exhausted at {samples} equivalent samples; unresolved near {region}"
        )
        self.region = region
        self.samples = samples


class RefinementUnsupported(SpecflowError):
    pass


# spectral
class WindowUnsafe(SpecflowError):
    def __init__(self, vertex: int, value: float):
        super().__init__(f"eigenvalue {value!r} at vertex {vertex} sits on the window edge")
        self.vertex = vertex
        self.value = value


class IsolationFailure(SpecflowError):
    pass


class NotConstantMultiplicity(SpecflowError):
    def __init__(self, message: str, jump: float):
        super().__init__(f"{message} (projection jump {jump:.3f})")
        self.jump = jump


# exhaustion
class AnchorMiss(SpecflowError):
    pass


class PatchUnderResolved(SpecflowError):
    pass


class InconsistentOffset(SpecflowError):
    pass


class LevelCollision(SpecflowError):
    def __init__(self, vertex: int, value: float, level: float):
        super().__init__(f"level {level!r} collides with eigenvalue {value!r} at vertex {vertex}")
        self.vertex = vertex
        self.value = value
        self.level = level


class GlueMismatch(SpecflowError):
    """Internal defect: patch labelings disagree after shifting by a valid witness."""


# mickelsson
class LogBranchDegeneracy(SpecflowError):
    pass


class DimensionMismatch(SpecflowError):
    pass


class PhaseStepTooLarge(SpecflowError):
    pass


# deform
class IndexCollision(SpecflowError):
    pass


class FieldMisaligned(SpecflowError):
    pass


class FluxSaturation(SpecflowError):
    pass


class ExtensionFailed(SpecflowError):
    pass
