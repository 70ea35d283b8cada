"""Lagrangian ideal-flow toolkit: Cauchy invariants, Taylor-in-time maps and circulation diagnostics.

Everything lives on a periodic box ``[0, 2 pi)^d`` (``d`` = 2 or 3) discretised
spectrally; analytic steady Euler flows tracked by an independent adaptive
integrator serve as ground truth.
"""

from .errors import (
    CauchyFlowError,
    NonFiniteFieldError,
    DimensionMismatchError,
    GridMismatchError,
    InconsistentSourceError,
    MapDegenerateError,
    ConstraintViolatedError,
    MissingPressureHistoryError,
    NonUniformSpacingError,
    ExtrapolationError,
    TrackingError,
    OrientationError,
    ContourError,
    LabelMismatchError,
)
from .geometry import (
    CirculationReport,
    Contour,
    Surface,
    advect_contour,
    circulation,
    circulation_history,
    initial_circulation,
    lagrangian_circulation,
    refinement_study,
    vorticity_flux,
)
from .lagrangian import (
    FlowState,
    JacobianField,
    LagrangianMap,
    PressureHistory,
    cauchy_invariants,
    current_vorticity,
    hankel_curl_form,
    jacobian,
    noether_residual,
    state_diagnostics,
    vorticity_formula,
    weber_form,
    weber_function,
    weber_residual,
)
from .oracle import AnalyticFlow, TrackedBundle, track, track_times
from .spectral import (
    Field,
    Grid,
    ScalarField,
    TensorField,
    VectorField,
    curl,
    divergence,
    gradient,
    helmholtz_decompose,
    invert_curl_div,
    laplacian,
    set_workers,
)
from .taylor import SolverConfig, TaylorSeries, estimate_radius, evaluate, solve_to_order

__version__ = "0.1.0"
