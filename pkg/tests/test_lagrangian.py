import math

import numpy as np
import pytest

from cauchyflow import AnalyticFlow, Grid
from cauchyflow.errors import (
    ConstraintViolatedError,
    GridMismatchError,
    MapDegenerateError,
    MissingPressureHistoryError,
    NonUniformSpacingError,
)
from cauchyflow.lagrangian import (
    FlowState,
    LagrangianMap,
    PressureHistory,
    cauchy_invariants,
    current_vorticity,
    hankel_curl_form,
    jacobian,
    lagrangian_pressure,
    noether_residual,
    state_diagnostics,
    vorticity_formula,
    weber_form,
    weber_function,
    weber_residual,
    weber_solenoidal_part,
)
from cauchyflow.oracle import pressure_history, track, track_times
from cauchyflow.spectral import ScalarField, VectorField, as_vector, curl


@pytest.fixture(scope="module")
def tg_state():
    flow = AnalyticFlow.taylor_green_2d()
    grid = Grid.cube(64, 2)
    hist, _ = pressure_history(flow, grid, 0.5, samples=65, tol=1e-12)
    b = track(flow, grid.coordinates(), 0.5, 1e-12)
    return flow, b, b.to_state(grid, hist)


@pytest.fixture(scope="module")
def abc_state():
    flow = AnalyticFlow.abc()
    grid = Grid.cube(16, 3)
    b = track(flow, grid.coordinates(), 0.3, 1e-11)
    return flow, b, b.to_state(grid)


def uniform_state(grid, U, t):
    v = as_vector(grid, U)
    disp = as_vector(grid, [u * t for u in U])
    times = np.linspace(0, t, 5)
    ke = np.full((5,) + grid.shape, 0.5 * sum(u * u for u in U))
    hist = PressureHistory(times, np.zeros_like(ke), ke)
    return FlowState(LagrangianMap(grid, disp, t), v, v, pressure_history=hist)


# ---------------------------------------------------------------- Jacobian


def test_identity_map_has_unit_jacobian(grid3):
    jac = jacobian(LagrangianMap.identity(grid3))
    assert jac.det_deviation() == 0.0
    eye = np.eye(3)[:, :, None, None, None]
    assert np.array_equal(jac.tensor.data, np.broadcast_to(eye, jac.tensor.data.shape))


def test_folded_map_raises_with_location(grid2):
    x, _ = grid2.coordinates()
    lmap = LagrangianMap(grid2, as_vector(grid2, [1.5 * np.sin(x), 0.0]))
    with pytest.raises(MapDegenerateError) as err:
        jacobian(lmap)
    # det = 1 + 1.5 cos x is most negative at x = pi
    assert err.value.worst_det == pytest.approx(-0.5)
    assert grid2.coordinates()[0][err.value.worst_index] == pytest.approx(math.pi)
    assert jacobian(lmap, check=False).det_deviation() == pytest.approx(1.5)


def test_jacobian_of_shear_map_is_exact(grid2):
    _, y = grid2.coordinates()
    lmap = LagrangianMap(grid2, as_vector(grid2, [0.3 * np.sin(y), 0.0]))
    jac = jacobian(lmap)
    assert jac.det_deviation() < 1e-14  # shears preserve area
    assert np.max(np.abs(jac.tensor[0, 1] - 0.3 * np.cos(y))) < 1e-13


# ---------------------------------------------------------- Cauchy invariants


def test_invariants_at_t0_equal_initial_vorticity(grid3):
    flow = AnalyticFlow.abc()
    v0 = VectorField(grid3, flow.velocity(grid3.coordinates()))
    st = FlowState(LagrangianMap.identity(grid3), v0, v0)
    assert (cauchy_invariants(st) - st.omega0).norm_inf() < 1e-13


def test_invariants_conserved_on_tracked_tg(tg_state):
    _, _, st = tg_state
    assert (cauchy_invariants(st) - st.omega0).norm_inf() < 1e-8


def test_invariants_conserved_on_tracked_abc(abc_state):
    _, _, st = abc_state
    rel = (cauchy_invariants(st) - st.omega0).norm_inf() / st.omega0.norm_inf()
    assert rel < 1e-6


@pytest.mark.parametrize("which, bound", [("tg", 1e-11), ("abc", 1e-7)])
def test_hankel_form_equals_invariants(which, bound, tg_state, abc_state):
    # identical analytically; discretely they differ by the product-rule truncation,
    # which is ~1e-8 on the coarse 16^3 ABC grid and at rounding level on 64^2 TG
    _, _, st = tg_state if which == "tg" else abc_state
    assert (hankel_curl_form(st) - cauchy_invariants(st)).norm_inf() < bound


def test_uniform_flow_has_zero_invariants(grid3):
    st = uniform_state(grid3, [0.3, -1.0, 2.0], 1.7)
    assert cauchy_invariants(st).norm_inf() == 0.0
    assert (weber_form(st) - st.v0).norm_inf() == 0.0


# ----------------------------------------------------------------- vorticity


def test_vorticity_formula_matches_helmholtz_transport(abc_state):
    _, b, st = abc_state
    w = vorticity_formula(jacobian(st.map), st.omega0)
    assert np.max(np.abs(w.data - b.vorticity)) < 1e-9


def test_vorticity_formula_is_identity_in_2d(tg_state):
    _, _, st = tg_state
    w = vorticity_formula(jacobian(st.map), st.omega0)
    assert isinstance(w, ScalarField)
    assert np.array_equal(w.data, st.omega0.data)


def test_vorticity_formula_refuses_compressible_maps(grid2):
    x, _ = grid2.coordinates()
    lmap = LagrangianMap(grid2, as_vector(grid2, [0.2 * np.sin(x), 0.0]))
    with pytest.raises(ConstraintViolatedError) as err:
        vorticity_formula(jacobian(lmap), ScalarField.zeros(grid2))
    assert err.value.max_deviation == pytest.approx(0.2)


def test_zero_initial_vorticity_gives_exact_zero(grid3):
    flow = AnalyticFlow.abc()
    b = track(flow, grid3.coordinates(), 0.2, 1e-10)
    w = vorticity_formula(jacobian(b.to_map(grid3)), VectorField.zeros(grid3))
    assert w.norm_inf() == 0.0


def test_current_vorticity_independent_route(tg_state, abc_state):
    flow, b, st = tg_state
    assert np.max(np.abs(current_vorticity(st).data - flow.vorticity(b.positions))) < 1e-8
    flow, b, st = abc_state
    assert np.max(np.abs(current_vorticity(st).data - flow.vorticity(b.positions))) < 1e-8


def test_grid_mismatch_is_rejected(grid2):
    g = Grid.cube(16, 2)
    with pytest.raises(GridMismatchError):
        FlowState(LagrangianMap.identity(grid2), VectorField.zeros(g), VectorField.zeros(grid2))


def test_strict_state_rejects_compressible_v0(grid2):
    x, _ = grid2.coordinates()
    v0 = as_vector(grid2, [np.sin(x), 0.0])
    with pytest.raises(ConstraintViolatedError):
        FlowState(LagrangianMap.identity(grid2), v0, v0)
    FlowState(LagrangianMap.identity(grid2), v0, v0, strict=False)


# --------------------------------------------------------------------- Weber


def test_weber_relation_on_tg(tg_state):
    _, b, st = tg_state
    assert weber_residual(st).norm_inf() < 1e-8
    assert weber_solenoidal_part(st) < 1e-10
    # the trajectory integral of the oracle and the Simpson sum agree
    assert np.max(np.abs(weber_function(st).data - b.weber)) < 1e-8


def test_weber_relation_exact_for_uniform_flow(grid2):
    st = uniform_state(grid2, [1.0, 0.5], 0.8)
    W = weber_function(st)
    assert W.data == pytest.approx(np.full(grid2.shape, -0.5 * 1.25 * 0.8))
    assert weber_residual(st).norm_inf() == 0.0


def test_weber_needs_matching_history(grid2):
    v = as_vector(grid2, [1.0, 0.0])
    st = FlowState(LagrangianMap(grid2, as_vector(grid2, [0.5, 0.0]), 0.5), v, v)
    with pytest.raises(MissingPressureHistoryError):
        weber_function(st)
    ke = np.full((3,) + grid2.shape, 0.5)
    short = PressureHistory(np.array([0.0, 0.1, 0.2]), np.zeros_like(ke), ke)
    st = FlowState(st.map, v, v, pressure_history=short)
    with pytest.raises(MissingPressureHistoryError):
        weber_function(st)


def test_pressure_history_validation(grid2):
    z = np.zeros((3,) + grid2.shape)
    with pytest.raises(ValueError):
        PressureHistory(np.array([0.0, 0.2, 0.1]), z, z)
    with pytest.raises(ValueError):
        PressureHistory(np.array([0.0, 0.1]), z[:2], z[:2])


# ------------------------------------------------------------------- Noether


def test_noether_residual_is_second_order(tg):
    grid = Grid.cube(32, 2)
    t = 0.5
    res = []
    for dt in (0.02, 0.01):
        bs = track_times(tg, grid.coordinates(), [t - dt, t, t + dt], 1e-12)
        res.append(noether_residual([b.to_state(grid) for b in bs]).norm_inf())
    assert math.log2(res[0] / res[1]) == pytest.approx(2.0, abs=0.1)


def test_noether_residual_needs_uniform_spacing(tg):
    grid = Grid.cube(16, 2)
    bs = track_times(tg, grid.coordinates(), [0.1, 0.2, 0.35], 1e-10)
    with pytest.raises(NonUniformSpacingError):
        noether_residual([b.to_state(grid) for b in bs])
    with pytest.raises(ValueError):
        noether_residual([b.to_state(grid) for b in bs[:2]])


# ------------------------------------------------------------------ pressure


def test_lagrangian_pressure_recovers_analytic_pressure(tg_state):
    flow, b, st = tg_state
    acc = VectorField(st.grid, -flow.pressure_gradient(b.positions))
    st = FlowState(st.map, st.velocity, st.v0, acceleration=acc)
    p = lagrangian_pressure(st).data
    ref = flow.pressure(b.positions)
    assert np.max(np.abs(p - (ref - ref.mean()))) < 1e-9


def test_state_diagnostics_row(tg_state):
    _, _, st = tg_state
    row = state_diagnostics(st)
    assert set(row) == {"t", "invariant_drift_Linf", "det_drift_Linf", "circulation_drift", "weber_residual"}
    assert row["t"] == 0.5
    assert row["invariant_drift_Linf"] < 1e-8
    assert math.isnan(row["circulation_drift"])
    assert row["weber_residual"] < 1e-8
