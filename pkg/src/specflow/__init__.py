"""Spectral flow, spectral exhaustions and band separation for sampled
families of Hermitian operators."""
from .errors import SpecflowError
from .hermitian import (
    ClusteredSpectrum,
    HermitianOperator,
    PiecewiseLinear,
    cluster_spectrum,
    eigh,
    functional_calculus,
    spectral_projection,
)
from .spaces import (
    CechCocycle,
    Cover,
    ParameterComplex,
    build_general,
    build_loop,
    build_path,
    build_sphere_grid,
    solve_coboundary,
    star_cover,
)
from .families import OperatorFamily, SampledFamily, evaluate, refine, sample, sample_matrices
from .spectral import canonical_window, components, projection_field, spectral_graph
from .exhaustion import (
    Exhaustion,
    FlowObstruction,
    enumerate_spectrum,
    exhaust,
    find_gap_section,
    global_exhaustion,
    local_exhaustions,
    spectral_flow_cocycle,
    spectral_flow_crossings,
)
from .mickelsson import (
    UnitaryMatrix,
    det_winding,
    lift_unitary_family,
    mickelsson_spectrum,
    mickelsson_truncate,
)
from .deform import chern_number, flatten, make_region, rank_one_push, separate

__version__ = "0.1.0"
