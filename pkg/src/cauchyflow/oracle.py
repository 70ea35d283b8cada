"""Ground truth: closed-form steady flows and adaptive trajectory tracking.

Tracking integrates, per particle, the trajectory ``x' = v(x)``, the
variational equation ``J' = grad v(x) J``, the Helmholtz vorticity equation
``omega' = (omega . grad) v`` and the Weber integrand ``p - |v|^2 / 2``. None
of it touches the spectral machinery, so it stays an independent check on
everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError, LabelMismatchError, TrackingError
from .lagrangian import FlowState, LagrangianMap, PressureHistory
from .spectral import Grid, ScalarField, VectorField

FLOW_NAMES = ("rest", "uniform", "solid_rotation", "taylor_green_2d", "abc", "divergent")


@dataclass(frozen=True)
class AnalyticFlow:
    """Closed-form velocity, velocity gradient and (where Euler-exact) pressure.

    Arrays of points have shape ``(d, ...)``. ``grad[i, j] = d v_i / d x_j``.
    """

    name: str
    dim: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in FLOW_NAMES:
            raise ValueError(f"unknown flow {self.name!r}; expected one of {FLOW_NAMES}")
        if self.name == "taylor_green_2d" and self.dim != 2:
            raise DimensionMismatchError("taylor_green_2d is two-dimensional")
        if self.name == "solid_rotation" and self.dim != 2:
            raise DimensionMismatchError("solid_rotation is two-dimensional")
        if self.name == "abc" and self.dim != 3:
            raise DimensionMismatchError("abc is three-dimensional")
        if self.name == "uniform" and len(self.params.get("U", ())) != self.dim:
            raise DimensionMismatchError("uniform flow needs one velocity component per axis")

    # constructors ---------------------------------------------------------
    @classmethod
    def rest(cls, dim: int = 3):
        return cls("rest", dim)

    @classmethod
    def uniform(cls, U: Sequence[float]):
        U = tuple(float(u) for u in U)
        return cls("uniform", len(U), {"U": U})

    @classmethod
    def solid_rotation(cls, omega: float = 1.0):
        return cls("solid_rotation", 2, {"omega": float(omega)})

    @classmethod
    def taylor_green_2d(cls, amplitude: float = 1.0):
        return cls("taylor_green_2d", 2, {"amplitude": float(amplitude)})

    @classmethod
    def abc(cls, A: float = 1.0, B: float = 1.0, C: float = 1.0):
        return cls("abc", 3, {"A": float(A), "B": float(B), "C": float(C)})

    @classmethod
    def divergent(cls, dim: int = 3, amplitude: float = 0.5):
        """Non-solenoidal field, only for negative controls."""
        return cls("divergent", dim, {"amplitude": float(amplitude)})

    @classmethod
    def from_spec(cls, name: str, dim: int | None = None, **params):
        if name == "uniform":
            return cls.uniform(params["U"])
        if name == "solid_rotation":
            return cls.solid_rotation(params.get("omega", 1.0))
        if name == "taylor_green_2d":
            return cls.taylor_green_2d(params.get("amplitude", 1.0))
        if name == "abc":
            return cls.abc(params.get("A", 1.0), params.get("B", 1.0), params.get("C", 1.0))
        if name == "divergent":
            return cls.divergent(dim or 3, params.get("amplitude", 0.5))
        if name == "rest":
            return cls.rest(dim or 3)
        raise ValueError(f"unknown flow {name!r}")

    # fields ---------------------------------------------------------------
    @property
    def has_pressure(self) -> bool:
        return self.name != "divergent"

    @property
    def solenoidal(self) -> bool:
        return self.name != "divergent"

    def velocity(self, x: np.ndarray) -> np.ndarray:
        return self._velocity(np.asarray(x, dtype=float))

    def _velocity(self, x: np.ndarray) -> np.ndarray:
        # no float cast: the complex-step pressure check evaluates at complex x
        n, p = self.name, self.params
        if n == "rest":
            return np.zeros_like(x)
        if n == "uniform":
            return np.stack([np.full(x.shape[1:], u) for u in p["U"]])
        if n == "solid_rotation":
            return p["omega"] * np.stack([-x[1], x[0]])
        if n == "taylor_green_2d":
            U = p["amplitude"]
            return U * np.stack([np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])])
        if n == "abc":
            A, B, C = p["A"], p["B"], p["C"]
            return np.stack([
                A * np.sin(x[2]) + C * np.cos(x[1]),
                B * np.sin(x[0]) + A * np.cos(x[2]),
                C * np.sin(x[1]) + B * np.cos(x[0]),
            ])
        return p["amplitude"] * np.sin(x)

    def velocity_gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.dim
        n, p = self.name, self.params
        G = np.zeros((d, d) + x.shape[1:])
        if n == "solid_rotation":
            G[0, 1] = -p["omega"]
            G[1, 0] = p["omega"]
        elif n == "taylor_green_2d":
            U = p["amplitude"]
            c0, s0, c1, s1 = np.cos(x[0]), np.sin(x[0]), np.cos(x[1]), np.sin(x[1])
            G[0, 0] = U * c0 * c1
            G[0, 1] = -U * s0 * s1
            G[1, 0] = U * s0 * s1
            G[1, 1] = -U * c0 * c1
        elif n == "abc":
            A, B, C = p["A"], p["B"], p["C"]
            G[0, 1] = -C * np.sin(x[1])
            G[0, 2] = A * np.cos(x[2])
            G[1, 0] = B * np.cos(x[0])
            G[1, 2] = -A * np.sin(x[2])
            G[2, 0] = -B * np.sin(x[0])
            G[2, 1] = C * np.cos(x[1])
        elif n == "divergent":
            for i in range(d):
                G[i, i] = p["amplitude"] * np.cos(x[i])
        return G

    def pressure(self, x: np.ndarray) -> np.ndarray:
        """Steady-Euler pressure (unit density); ``None`` for the divergent control."""
        return self._pressure(np.asarray(x, dtype=float))

    def _pressure(self, x: np.ndarray) -> np.ndarray:
        n, p = self.name, self.params
        if n in ("rest", "uniform"):
            return np.zeros(x.shape[1:])
        if n == "solid_rotation":
            return 0.5 * p["omega"] ** 2 * (x[0] ** 2 + x[1] ** 2)
        if n == "taylor_green_2d":
            return 0.25 * p["amplitude"] ** 2 * (np.cos(2 * x[0]) + np.cos(2 * x[1]))
        if n == "abc":
            return -0.5 * np.sum(self._velocity(x) ** 2, axis=0)
        return None

    def pressure_gradient(self, x: np.ndarray) -> np.ndarray:
        """``-(v . grad) v`` for steady flows, i.e. the exact ``grad p``."""
        v = self.velocity(x)
        G = self.velocity_gradient(x)
        return -np.einsum("ij...,j...->i...", G, v)

    def vorticity(self, x: np.ndarray) -> np.ndarray:
        G = self.velocity_gradient(x)
        if self.dim == 2:
            return G[1, 0] - G[0, 1]
        return np.stack([G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]])

    def steady_residual(self, x: np.ndarray) -> np.ndarray:
        """``(v . grad) v + grad p`` with ``grad p`` from a complex-step derivative of :meth:`pressure`.

        The complex step is independent of the closed-form ``(v . grad) v``
        route and exact to rounding, so the residual sits at machine precision.
        """
        x = np.asarray(x, dtype=float)
        h = 1e-30
        gp = []
        for i in range(self.dim):
            e = np.zeros((self.dim,) + (1,) * (x.ndim - 1))
            e[i] = h
            gp.append(self._pressure(x + 1j * e).imag / h)
        return -self.pressure_gradient(x) + np.stack(gp)


@dataclass(frozen=True)
class TrackedBundle:
    """Trajectory-level ground truth for a set of labels at time ``t``.

    Every array keeps the label layout: ``positions`` is ``(d, *label_shape)``,
    ``jacobian`` is ``(d, d, *label_shape)``; ``vorticity`` is scalar-shaped in
    2D. ``weber`` is ``int_0^t (p - |v|^2/2)`` when the flow has a pressure.
    """

    flow: AnalyticFlow
    labels: np.ndarray
    t: float
    positions: np.ndarray
    jacobian: np.ndarray
    vorticity: np.ndarray
    omega0: np.ndarray
    weber: np.ndarray | None
    steps: int = 0

    @property
    def velocity(self) -> np.ndarray:
        return self.flow.velocity(self.positions)

    @property
    def pressure(self) -> np.ndarray | None:
        return self.flow.pressure(self.positions)

    def determinant(self) -> np.ndarray:
        return np.linalg.det(np.moveaxis(self.jacobian, (0, 1), (-2, -1)))

    def det_drift(self) -> float:
        return float(np.max(np.abs(self.determinant() - 1.0)))

    def formula_vorticity(self) -> np.ndarray:
        """Cauchy's formula applied with the variational Jacobian."""
        if self.flow.dim == 2:
            return self.omega0
        return np.einsum("ij...,j...->i...", self.jacobian, self.omega0)

    def to_map(self, grid: Grid) -> LagrangianMap:
        _check_grid_labels(self.labels, grid)
        return LagrangianMap(grid, VectorField(grid, self.positions - self.labels), self.t)

    def to_state(self, grid: Grid, history: PressureHistory | None = None) -> FlowState:
        _check_grid_labels(self.labels, grid)
        return FlowState(
            self.to_map(grid),
            VectorField(grid, self.velocity),
            VectorField(grid, self.flow.velocity(self.labels)),
            pressure_history=history,
            strict=self.flow.solenoidal,
        )


def _check_grid_labels(labels: np.ndarray, grid: Grid):
    if labels.shape != (grid.dim,) + grid.shape or not np.allclose(labels, grid.coordinates(), atol=1e-14):
        raise LabelMismatchError("bundle labels are not the grid points")


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4


def dopri54(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, times: Sequence[float],
            tol: float, max_steps: int = 200_000, h0: float | None = None):
    """Adaptive Dormand-Prince 5(4) with max-norm error control.

    Steps land exactly on every requested output time. Returns the list of
    states at ``times`` and the number of accepted steps. Raises
    :class:`TrackingError` if the step budget is exhausted or the step size
    underflows.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("output times must be non-negative and sorted")
    y = np.array(y0, dtype=float)
    t = 0.0
    out = []
    k1 = rhs(t, y)
    h = h0 or min(0.01, tol ** 0.2)
    steps = 0
    for t_out in times:
        while t < t_out:
            if steps >= max_steps:
                raise TrackingError(f"step budget of {max_steps} exhausted at t={t:.6g}")
            h = min(h, t_out - t)
            if h <= 1e-14 * max(1.0, abs(t)):
                raise TrackingError(f"step size underflow at t={t:.6g}")
            ks = [k1]
            for i in range(1, 7):
                yi = y + h * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
                ks.append(rhs(t + _C[i] * h, yi))
            y_new = y + h * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
            err_vec = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
            scale = tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
            err = float(np.max(np.abs(err_vec) / scale))
            if err <= 1.0:
                t = t + h if t_out - t - h > 1e-14 * max(1.0, t_out) else t_out
                y = y_new
                k1 = ks[6]
                steps += 1
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
        out.append(y.copy())
    return out, steps


def rk4(rhs, y0, times, dt: float):
    """Classical fixed-step RK4; the last step before each output time is shortened."""
    y = np.array(y0, dtype=float)
    t = 0.0
    out = []
    steps = 0
    for t_out in np.asarray(times, dtype=float):
        while t < t_out - 1e-14:
            h = min(dt, t_out - t)
            k1 = rhs(t, y)
            k2 = rhs(t + h / 2, y + h / 2 * k1)
            k3 = rhs(t + h / 2, y + h / 2 * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
            steps += 1
        out.append(y.copy())
    return out, steps


def track_times(flow: AnalyticFlow, labels, times: Sequence[float], tol: float = 1e-10, *,
                method: str = "dopri54", dt: float | None = None, max_steps: int = 200_000) -> list[TrackedBundle]:
    """Track ``labels`` (shape ``(d, ...)``) through the steady ``flow`` to each of ``times``."""
    labels = np.asarray(labels, dtype=float)
    d = flow.dim
    if labels.shape[0] != d:
        raise DimensionMismatchError(f"labels must have {d} leading coordinates")
    lshape = labels.shape[1:]
    M = int(np.prod(lshape)) if lshape else 1
    a = labels.reshape(d, M)
    nw = 3 if d == 3 else 0
    has_p = flow.has_pressure

    def unpack(y):
        x = y[:d]
        J = y[d:d + d * d].reshape(d, d, M)
        w = y[d + d * d:d + d * d + nw]
        return x, J, w

    def rhs(_t, y):
        x, J, w = unpack(y)
        G = flow.velocity_gradient(x)
        v = flow.velocity(x)
        parts = [v, np.einsum("ik...,kj...->ij...", G, J).reshape(d * d, M)]
        if nw:
            parts.append(np.einsum("ij...,j...->i...", G, w))
        if has_p:
            parts.append((flow.pressure(x) - 0.5 * np.sum(v * v, axis=0))[None])
        return np.concatenate(parts)

    omega0 = flow.vorticity(a)
    y0 = [a, np.eye(d).reshape(d * d, 1) * np.ones((1, M))]
    if nw:
        y0.append(omega0)
    if has_p:
        y0.append(np.zeros((1, M)))
    y0 = np.concatenate(y0)

    if method == "dopri54":
        ys, steps = dopri54(rhs, y0, times, tol, max_steps=max_steps)
    elif method == "rk4":
        if dt is None:
            raise ValueError("rk4 needs a step size")
        ys, steps = rk4(rhs, y0, times, dt)
    else:
        raise ValueError(f"unknown method {method!r}")

    bundles = []
    for t, y in zip(times, ys):
        x, J, w = unpack(y)
        vort = w if nw else omega0
        W = y[-1].reshape(lshape) if has_p else None
        bundles.append(TrackedBundle(
            flow=flow,
            labels=labels,
            t=float(t),
            positions=x.reshape((d,) + lshape),
            jacobian=J.reshape((d, d) + lshape),
            vorticity=vort.reshape(omega0.shape[:-1] + lshape) if nw else omega0.reshape(lshape),
            omega0=omega0.reshape(omega0.shape[:-1] + lshape) if nw else omega0.reshape(lshape),
            weber=W,
            steps=steps,
        ))
    return bundles


def track(flow: AnalyticFlow, labels, t: float, tol: float = 1e-10, **kwargs) -> TrackedBundle:
    """Track ``labels`` to a single time ``t``."""
    return track_times(flow, labels, [t], tol, **kwargs)[0]


def pressure_history(flow: AnalyticFlow, grid: Grid, t: float, samples: int = 65,
                     tol: float = 1e-11) -> tuple[PressureHistory, list[TrackedBundle]]:
    """Pressure and kinetic-energy samples at ``samples`` uniform times on ``[0, t]``."""
    if samples < 3 or samples % 2 == 0:
        raise ValueError("use an odd number (>= 3) of samples")
    times = np.linspace(0.0, t, samples)
    bundles = track_times(flow, grid.coordinates(), times, tol)
    p = np.stack([b.pressure for b in bundles])
    ke = np.stack([0.5 * np.sum(b.velocity ** 2, axis=0) for b in bundles])
    return PressureHistory(times, p, ke), bundles


def helmholtz_transport_check(bundle: TrackedBundle, formula_output) -> float:
    """L-inf gap between Helmholtz-transported vorticity and a Cauchy-formula output."""
    out = formula_output.data if isinstance(formula_output, (ScalarField, VectorField)) else np.asarray(formula_output)
    if out.shape != bundle.vorticity.shape:
        raise LabelMismatchError(f"formula output {out.shape} does not match bundle {bundle.vorticity.shape}")
    return float(np.max(np.abs(bundle.vorticity - out))) if out.size else 0.0


def rotation_closed_form(labels: np.ndarray, omega: float, t: float) -> np.ndarray:
    c, s = math.cos(omega * t), math.sin(omega * t)
    return np.stack([c * labels[0] - s * labels[1], s * labels[0] + c * labels[1]])
