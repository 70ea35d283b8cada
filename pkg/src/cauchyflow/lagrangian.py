"""Lagrangian map, Jacobian and the pointwise identities built on them.

A map is stored as the periodic displacement ``s(a) = x(a) - a``; the
Jacobian is ``I + grad s``. Everything here is a pure function of its inputs.
Tensor convention: ``J[i, j] = d x_i / d a_j``, so row ``k`` of ``J`` is the
Lagrangian gradient of ``x_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .errors import (
    ConstraintViolatedError,
    DimensionMismatchError,
    GridMismatchError,
    MapDegenerateError,
    MissingPressureHistoryError,
    NonUniformSpacingError,
)
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
)


@dataclass(frozen=True)
class LagrangianMap:
    grid: Grid
    displacement: VectorField
    t: float = 0.0

    def __post_init__(self):
        if self.displacement.grid != self.grid:
            raise GridMismatchError("displacement is not on the map grid")

    @classmethod
    def identity(cls, grid: Grid, t: float = 0.0) -> "LagrangianMap":
        return cls(grid, VectorField.zeros(grid), t)

    def positions(self) -> np.ndarray:
        return self.grid.coordinates() + self.displacement.data


@dataclass(frozen=True)
class JacobianField:
    tensor: TensorField
    determinant: ScalarField

    def det_deviation(self) -> float:
        return float(np.max(np.abs(self.determinant.data - 1.0)))


@dataclass(frozen=True)
class PressureHistory:
    """Samples of pressure and kinetic energy along every trajectory.

    ``pressure`` and ``kinetic`` have shape ``(len(times), *grid.shape)``;
    ``kinetic`` holds ``|x_dot|**2 / 2``. Times must span ``[t0, t]``.
    """

    times: np.ndarray
    pressure: np.ndarray
    kinetic: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 3:
            raise ValueError("pressure history needs at least three sample times")
        if np.any(np.diff(times) <= 0):
            raise ValueError("pressure history times must increase")
        if self.pressure.shape != self.kinetic.shape or self.pressure.shape[0] != times.size:
            raise DimensionMismatchError("pressure/kinetic samples do not match the time axis")
        object.__setattr__(self, "times", times)


@dataclass(frozen=True)
class FlowState:
    """Map, Lagrangian velocity and initial data at one instant.

    ``omega0`` defaults to ``curl(v0)``. With ``strict=True`` the initial data
    must be solenoidal and consistent with ``omega0``.
    """

    map: LagrangianMap
    velocity: VectorField
    v0: VectorField
    omega0: Field | None = None
    pressure_history: PressureHistory | None = None
    acceleration: VectorField | None = None
    strict: bool = field(default=True, compare=False, repr=False)
    tol: float = field(default=1e-12, compare=False, repr=False)

    def __post_init__(self):
        grid = self.map.grid
        for name in ("velocity", "v0", "omega0", "acceleration"):
            f = getattr(self, name)
            if f is not None and f.grid != grid:
                raise GridMismatchError(f"{name} is not on the map grid")
        if self.omega0 is None:
            object.__setattr__(self, "omega0", curl(self.v0))
        if self.strict:
            scale = max(self.v0.norm_inf(), 1.0) * max(grid.shape) / 2
            div = divergence(self.v0).norm_inf()
            if div > self.tol * scale:
                raise ConstraintViolatedError(f"initial velocity is not solenoidal (|div v0| = {div:.3e})", div)
            dev = (curl(self.v0) - self.omega0).norm_inf()
            if dev > self.tol * scale:
                raise ConstraintViolatedError(f"omega0 differs from curl(v0) by {dev:.3e}", dev)

    @property
    def grid(self) -> Grid:
        return self.map.grid

    @property
    def t(self) -> float:
        return self.map.t


def _check_state(state: FlowState):
    if state.velocity.grid != state.map.grid:
        raise GridMismatchError("velocity and map grids differ")


def jacobian(lmap: LagrangianMap, check: bool = True) -> JacobianField:
    """``I + grad s`` and its pointwise determinant.

    Raises :class:`MapDegenerateError` (carrying the worst grid index) when the
    determinant is non-positive anywhere and ``check`` is set.
    """
    grid = lmap.grid
    G = gradient(lmap.displacement).data.copy()
    for i in range(grid.dim):
        G[i, i] += 1.0
    det = np.linalg.det(np.moveaxis(G, (0, 1), (-2, -1)))
    if check and np.min(det) <= 0:
        worst = tuple(int(i) for i in np.unravel_index(np.argmin(det), det.shape))
        raise MapDegenerateError(
            f"Lagrangian map folds: det = {det[worst]:.3e} at grid index {worst}", worst, float(det[worst])
        )
    return JacobianField(TensorField(grid, G), ScalarField(grid, det))


def _pair_cross(A: np.ndarray, B: np.ndarray, dim: int) -> np.ndarray:
    """``sum_k grad A_k x grad B_k`` for gradient tensors ``A``, ``B``."""
    if dim == 2:
        return np.einsum("k...,k...->...", A[:, 0], B[:, 1]) - np.einsum("k...,k...->...", A[:, 1], B[:, 0])
    return np.cross(A, B, axis=1).sum(axis=0)


def cauchy_invariants(state: FlowState) -> Field:
    """Pointwise ``sum_k grad x_dot_k x grad x_k``; scalar in 2D.

    For an ideal incompressible flow this equals the initial vorticity at all
    times.
    """
    _check_state(state)
    grid = state.grid
    Gv = gradient(state.velocity).data
    J = jacobian(state.map, check=False).tensor.data
    out = _pair_cross(Gv, J, grid.dim)
    return ScalarField(grid, out) if grid.dim == 2 else VectorField(grid, out)


def weber_form(state: FlowState) -> VectorField:
    """``sum_k x_dot_k grad x_k``, the 'decurled' invariant."""
    _check_state(state)
    J = jacobian(state.map, check=False).tensor.data
    return VectorField(state.grid, np.einsum("k...,kj...->j...", state.velocity.data, J))


def hankel_curl_form(state: FlowState) -> Field:
    """Curl of :func:`weber_form`; equal to :func:`cauchy_invariants`."""
    return curl(weber_form(state))


def vorticity_formula(jac: JacobianField, omega0: Field, tol: float = 1e-6) -> Field:
    """Current vorticity at particle positions, ``omega_i = sum_j omega0_j J[i, j]``.

    The formula presumes a unit Jacobian; a determinant further than ``tol``
    from one raises :class:`ConstraintViolatedError`. In 2D the vorticity is
    normal to the plane and is returned unchanged.
    """
    grid = jac.tensor.grid
    if omega0.grid != grid:
        raise GridMismatchError("omega0 is not on the Jacobian grid")
    dev = jac.det_deviation()
    if dev > tol:
        raise ConstraintViolatedError(f"Jacobian determinant deviates from 1 by {dev:.3e}", dev)
    if grid.dim == 2:
        if not isinstance(omega0, ScalarField):
            raise DimensionMismatchError("2D vorticity is a scalar field")
        return ScalarField(grid, omega0.data)
    if not isinstance(omega0, VectorField):
        raise DimensionMismatchError("3D vorticity is a vector field")
    return VectorField(grid, np.einsum("ij...,j...->i...", jac.tensor.data, omega0.data))


def current_vorticity(state: FlowState) -> Field:
    """Eulerian vorticity at ``x(a, t)`` via the chain rule ``grad_x v = grad_a x_dot . J^-1``.

    Independent of the Cauchy formula; used to check it.
    """
    grid = state.grid
    Gv = np.moveaxis(gradient(state.velocity).data, (0, 1), (-2, -1))
    J = np.moveaxis(jacobian(state.map, check=False).tensor.data, (0, 1), (-2, -1))
    Gx = np.moveaxis(Gv @ np.linalg.inv(J), (-2, -1), (0, 1))
    if grid.dim == 2:
        return ScalarField(grid, Gx[1, 0] - Gx[0, 1])
    return VectorField(grid, np.stack([Gx[2, 1] - Gx[1, 2], Gx[0, 2] - Gx[2, 0], Gx[1, 0] - Gx[0, 1]]))


def weber_function(state: FlowState) -> ScalarField:
    """``W(a, t) = int_{t0}^{t} (p - |v|^2 / 2) dtau`` along each trajectory.

    Composite Simpson quadrature over the stored samples. The Weber relation
    reads ``weber_form - v0 = -grad W``.
    """
    hist = state.pressure_history
    if hist is None:
        raise MissingPressureHistoryError("state carries no pressure history")
    if hist.pressure.shape[1:] != state.grid.shape:
        raise GridMismatchError("pressure history is not on the state grid")
    span = max(abs(state.t), 1.0)
    if abs(hist.times[-1] - state.t) > 1e-12 * span:
        raise MissingPressureHistoryError(f"history ends at {hist.times[-1]} but the state is at t={state.t}")
    W = simpson(hist.pressure - hist.kinetic, x=hist.times, axis=0)
    return ScalarField(state.grid, W)


def weber_residual(state: FlowState) -> VectorField:
    """``weber_form - v0 + grad W``; vanishes for exact solutions."""
    return weber_form(state) - state.v0 + gradient(weber_function(state))


def noether_residual(states: Sequence[FlowState], rtol: float = 1e-9) -> Field:
    """Relabeling-symmetry residual ``curl[d/dt(weber_form) - sum_k x_ddot_k grad x_k]``.

    Uses the three states centred on the middle of ``states`` (uniform spacing
    required); time derivatives are central differences, so the residual of an
    exact solution is ``O(dt**2)``.
    """
    if len(states) < 3:
        raise ValueError("need at least three time-adjacent states")
    times = np.array([s.t for s in states])
    steps = np.diff(times)
    if np.any(steps <= 0) or np.ptp(steps) > rtol * max(abs(steps).max(), 1.0):
        raise NonUniformSpacingError(f"states are not uniformly spaced in time: {times}")
    grid = states[0].grid
    if any(s.grid != grid for s in states):
        raise GridMismatchError("states live on different grids")
    mid = len(states) // 2
    prev, centre, nxt = states[mid - 1], states[mid], states[mid + 1]
    dt2 = nxt.t - prev.t
    dm = (weber_form(nxt) - weber_form(prev)) / dt2
    acc = (nxt.velocity.data - prev.velocity.data) / dt2
    J = jacobian(centre.map, check=False).tensor.data
    bracket = dm - VectorField(grid, np.einsum("k...,kj...->j...", acc, J))
    return curl(bracket)


def lagrangian_pressure(state: FlowState) -> ScalarField:
    """Zero-mean pressure from ``sum_k x_ddot_k grad x_k = -grad_a p``."""
    from .spectral import invert_gradient

    if state.acceleration is None:
        raise MissingPressureHistoryError("state carries no acceleration")
    J = jacobian(state.map, check=False).tensor.data
    lhs = VectorField(state.grid, np.einsum("k...,kj...->j...", state.acceleration.data, J))
    return -invert_gradient(lhs)


def _rel(err: float, ref: float) -> float:
    return err / ref if ref > 0 else err


def state_diagnostics(state: FlowState) -> dict:
    """One diagnostic report row for a state."""
    inv = cauchy_invariants(state)
    w0 = state.omega0
    drift = _rel((inv - w0).norm_inf(), w0.norm_inf())
    det_drift = jacobian(state.map, check=False).det_deviation()
    row = {
        "t": float(state.t),
        "invariant_drift_Linf": drift,
        "det_drift_Linf": det_drift,
        "circulation_drift": math.nan,
        "weber_residual": math.nan,
    }
    if state.pressure_history is not None:
        row["weber_residual"] = weber_residual(state).norm_inf()
    return row


def weber_solenoidal_part(state: FlowState) -> float:
    """L-inf norm of the solenoidal part of ``weber_form - v0``."""
    return helmholtz_decompose(weber_form(state) - state.v0).solenoidal.norm_inf()
