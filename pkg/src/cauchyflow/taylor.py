"""Time-Taylor integration of the Lagrangian map.

Write ``x(a, t0 + tau) = a + sum_{s>=1} tau**s x_s(a)``. Collecting powers of
``tau`` in the Cauchy invariants equations and in ``det(grad x) = 1`` gives,
for ``n >= 2`` and ``G_s = grad x_s``::

    curl x_n = -(1/n) sum_{s=1}^{n-1} s sum_k grad x_{s,k} x grad x_{n-s,k}
    div  x_n = -[ sum_{s+r=n} Q(G_s, G_r) + sum_{s+r+q=n} D(G_s, G_r, G_q) ]

with ``Q(A, B) = (trA trB - tr(AB)) / 2`` and ``D`` the column-multilinear
determinant (3D; in 2D ``Q`` is replaced by the 2x2 determinant form and
there is no cubic term). ``x_1 = v0``; every later coefficient is recovered
zero-mean from its curl and divergence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ExtrapolationError, GridMismatchError, InconsistentSourceError
from .lagrangian import FlowState, LagrangianMap, PressureHistory, _pair_cross
from .spectral import (
    Field,
    Grid,
    ScalarField,
    VectorField,
    curl,
    divergence,
    gradient,
    interpolate,
    invert_curl_div,
    invert_gradient,
)


# largest RMS log-residual of the radius fit still called reliable (a factor ~1.6 scatter)
MAX_LOG_SCATTER = 0.5


@dataclass(frozen=True)
class SolverConfig:
    order: int = 10
    safety: float = 0.5
    dealias: bool = True
    source_tol: float = 1e-8
    solenoidal_tol: float = 1e-12

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 2:
            raise ValueError(f"order must be an integer >= 2, got {self.order}")
        if not 0 < self.safety < 1:
            raise ValueError(f"safety factor must lie in (0, 1), got {self.safety}")
        if self.source_tol <= 0 or self.solenoidal_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class RadiusEstimate:
    radius: float
    growth_rate: float
    r_squared: float
    orders: tuple[int, ...]
    reliable: bool
    note: str = ""

    def __float__(self):
        return self.radius


@dataclass(frozen=True)
class TaylorSeries:
    """Coefficients ``x_1 .. x_N`` of the Lagrangian map about ``t0``."""

    grid: Grid
    coefficients: tuple[VectorField, ...]
    t0: float = 0.0
    config: SolverConfig = field(default_factory=SolverConfig, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if any(c.grid != self.grid for c in self.coefficients):
            raise GridMismatchError("coefficient grid differs from the series grid")

    @property
    def order(self) -> int:
        return len(self.coefficients)

    @property
    def v0(self) -> VectorField:
        return self.coefficients[0]

    def norms(self) -> np.ndarray:
        return np.array([c.norm_inf() for c in self.coefficients])

    def scaled(self, alpha: float) -> "TaylorSeries":
        """Series of the flow started from ``alpha * v0`` (time rescaling)."""
        return TaylorSeries(self.grid, tuple(c * alpha ** (s + 1) for s, c in enumerate(self.coefficients)),
                            self.t0, self.config)


def _gradients(coeffs: Sequence[VectorField]) -> list[np.ndarray]:
    return [gradient(c).data for c in coeffs]


def _filtered(f: Field, on: bool) -> Field:
    if not on:
        return f
    grid = f.grid
    return f._new(grid.ifft(grid.fft(f.data) * grid.dealias_mask))


def _det_trilinear(A, B, C) -> np.ndarray:
    """``det`` with column 0 from ``A``, column 1 from ``B``, column 2 from ``C``."""
    return np.einsum("i...,i...->...", A[:, 0], np.cross(B[:, 1], C[:, 2], axis=0))


def _quadratic(A, B, dim) -> np.ndarray:
    if dim == 2:
        return A[0, 0] * B[1, 1] - A[1, 0] * B[0, 1]
    trA = np.einsum("ii...->...", A)
    trB = np.einsum("ii...->...", B)
    return 0.5 * (trA * trB - np.einsum("ij...,ji...->...", A, B))


def recursion_sources(grads: Sequence[np.ndarray], n: int, grid: Grid) -> tuple[Field, ScalarField]:
    """Curl and divergence prescribed for ``x_n`` by the lower-order gradients.

    ``grads[s-1]`` is ``grad x_s``; needs ``s = 1 .. n-1``.
    """
    dim = grid.dim
    w = sum(s * _pair_cross(grads[s - 1], grads[n - s - 1], dim) for s in range(1, n)) * (-1.0 / n)
    d = sum(_quadratic(grads[s - 1], grads[n - s - 1], dim) for s in range(1, n))
    if dim == 3:
        for s in range(1, n - 1):
            for r in range(1, n - s):
                q = n - s - r
                d = d + _det_trilinear(grads[s - 1], grads[r - 1], grads[q - 1])
    wf = ScalarField(grid, w) if dim == 2 else VectorField(grid, w)
    return wf, ScalarField(grid, -d)


def recursion_step(series: TaylorSeries, omega0: Field | None, n: int,
                   config: SolverConfig | None = None, grads=None) -> VectorField:
    """Coefficient ``x_n`` from ``x_1 .. x_{n-1}``.

    ``omega0`` is only used as a consistency check of the bootstrap
    (``curl x_1 = omega0``). Raises :class:`InconsistentSourceError` when the
    assembled curl source is not divergence free.
    """
    cfg = config or series.config
    if n < 2:
        raise ValueError("the recursion starts at n = 2; x_1 is the initial velocity")
    if series.order < n - 1:
        raise ValueError(f"need coefficients 1..{n - 1}, series has {series.order}")
    grid = series.grid
    if omega0 is not None:
        dev = (curl(series.coefficients[0]) - omega0).norm_inf()
        if dev > cfg.source_tol * max(1.0, omega0.norm_inf()):
            raise InconsistentSourceError(f"x_1 is not consistent with omega0 (gap {dev:.3e})")
    if grads is None:
        grads = _gradients(series.coefficients[: n - 1])
    w, d = recursion_sources(grads, n, grid)
    w = _filtered(w, cfg.dealias)
    d = _filtered(d, cfg.dealias)
    # sources are exact curls/divergences of periodic fields, so their means vanish analytically
    w = w - w.mean().reshape((-1,) + (1,) * grid.dim) if isinstance(w, VectorField) else w - float(w.mean())
    d = d - float(d.mean())
    return invert_curl_div(w, d, tol=cfg.source_tol)


def solve_to_order(v0: VectorField, config: SolverConfig | None = None, t0: float = 0.0) -> TaylorSeries:
    """Taylor series of the Lagrangian map up to ``config.order``."""
    cfg = config or SolverConfig()
    grid = v0.grid
    div = divergence(v0).norm_inf()
    if div > cfg.solenoidal_tol * max(1.0, v0.norm_inf()) * max(grid.shape) / 2:
        raise InconsistentSourceError(f"initial velocity is not solenoidal (|div v0| = {div:.3e})")
    coeffs = [VectorField(grid, v0.data)]
    grads = _gradients(coeffs)
    for n in range(2, cfg.order + 1):
        series = TaylorSeries(grid, tuple(coeffs), t0, cfg)
        xn = recursion_step(series, None, n, cfg, grads=grads)
        coeffs.append(xn)
        grads.append(gradient(xn).data)
    return TaylorSeries(grid, tuple(coeffs), t0, cfg)


def estimate_radius(series: TaylorSeries, rel_floor: float = 1e-13) -> RadiusEstimate:
    """Convergence radius from a least-squares fit of ``log |x_s|_inf`` against ``s``.

    The fit uses the last half of the available orders; the radius is
    ``exp(-slope)``. Norms below ``rel_floor * |x_1|`` count as zero; if every
    higher coefficient vanishes the radius is infinite. The estimate is flagged
    unreliable (with a warning) when the log-residuals scatter by more than
    ``MAX_LOG_SCATTER``.
    """
    N = series.order
    if N < 4:
        raise ValueError("radius estimation needs at least four coefficients")
    norms = series.norms()
    scale = max(norms[0], np.finfo(float).tiny)
    if np.all(norms[1:] <= rel_floor * scale):
        return RadiusEstimate(math.inf, 0.0, 1.0, tuple(range(2, N + 1)), True, "all higher coefficients vanish")
    first = N - N // 2 + 1
    orders = np.arange(first, N + 1)
    sel = norms[orders - 1]
    nz = sel > rel_floor * scale
    if nz.sum() < 2:
        return RadiusEstimate(math.inf, 0.0, 0.0, tuple(int(o) for o in orders), False,
                              "too few nonzero coefficients in the fit window")
    o, y = orders[nz], np.log(sel[nz])
    slope, intercept = np.polyfit(o, y, 1)
    resid = y - (slope * o + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    # judge the fit by its log-residual scatter: unlike R^2 this is unchanged by v0 -> alpha v0
    reliable = bool(nz.all() and math.sqrt(np.mean(resid ** 2)) <= MAX_LOG_SCATTER)
    note = "" if reliable else "norms are noisy or partly zero; estimate is unreliable"
    if not reliable:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return RadiusEstimate(float(math.exp(-slope)), float(math.exp(slope)), float(r2),
                          tuple(int(v) for v in o), reliable, note)


def log_norm_fit(series: TaylorSeries, orders: Sequence[int]) -> tuple[float, float]:
    """Slope and R^2 of ``log |x_s|_inf`` against ``s`` over ``orders``."""
    o = np.asarray(orders)
    y = np.log(series.norms()[o - 1])
    slope, intercept = np.polyfit(o, y, 1)
    resid = y - (slope * o + intercept)
    return float(slope), float(1.0 - np.sum(resid ** 2) / np.sum((y - y.mean()) ** 2))


def _horner(coeffs: Sequence[np.ndarray], tau: float, deriv: int) -> np.ndarray:
    """``d^k/dtau^k sum_{s=1}^N tau**s c_s`` by Horner's rule."""
    lo = max(deriv, 1)
    acc = np.zeros_like(coeffs[0])
    for s in range(len(coeffs), lo - 1, -1):
        acc = acc * tau + math.prod(range(s - deriv + 1, s + 1)) * coeffs[s - 1]
    return acc * tau ** (lo - deriv)


def _check_trust(series: TaylorSeries, tau: float, radius: float | None):
    if tau == 0:
        return
    if radius is None:
        if series.order < 4:
            return
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            radius = estimate_radius(series).radius
    limit = series.config.safety * radius
    if abs(tau) > limit:
        raise ExtrapolationError(f"|t - t0| = {abs(tau):.4g} exceeds the trust region {limit:.4g}")


def evaluate(series: TaylorSeries, t: float, *, check: bool = True, radius: float | None = None,
             history_samples: int = 0) -> FlowState:
    """Map, velocity and acceleration at ``t`` by Horner summation.

    With ``history_samples`` (odd, >= 3) the pressure and kinetic energy are
    reconstructed from ``x_ddot = -grad p`` at that many uniform times on
    ``[t0, t]`` so the Weber function can be computed.
    """
    tau = float(t - series.t0)
    if check:
        _check_trust(series, tau, radius)
    grid = series.grid
    coeffs = [c.data for c in series.coefficients]
    s = _horner(coeffs, tau, 0)
    xd = _horner(coeffs, tau, 1)
    xdd = _horner(coeffs, tau, 2)
    history = None
    if history_samples:
        history = pressure_history(series, t, history_samples)
    lmap = LagrangianMap(grid, VectorField(grid, s), float(t))
    return FlowState(lmap, VectorField(grid, xd), series.v0, pressure_history=history,
                     acceleration=VectorField(grid, xdd), strict=False)


def pressure_history(series: TaylorSeries, t: float, samples: int = 33) -> PressureHistory:
    """Pressure (zero-mean gauge) and kinetic energy along trajectories on ``[t0, t]``."""
    from .lagrangian import lagrangian_pressure

    if samples < 3 or samples % 2 == 0:
        raise ValueError("use an odd number (>= 3) of samples")
    times = np.linspace(series.t0, t, samples)
    p, ke = [], []
    for tk in times:
        st = evaluate(series, tk, check=False)
        p.append(lagrangian_pressure(st).data)
        ke.append(0.5 * np.sum(st.velocity.data ** 2, axis=0))
    return PressureHistory(times, np.stack(p), np.stack(ke))


def positions_at(series: TaylorSeries, labels: np.ndarray, t: float) -> np.ndarray:
    """Off-grid particle positions ``a + s(a, t)`` by trigonometric interpolation; ``labels`` is ``(M, d)``."""
    tau = float(t - series.t0)
    disp = _horner([c.data for c in series.coefficients], tau, 0)
    return np.asarray(labels, float) + interpolate(VectorField(series.grid, disp), labels)


def restart(series: TaylorSeries, t: float, config: SolverConfig | None = None, *,
            iterations: int = 200, tol: float = 1e-12) -> TaylorSeries:
    """Experimental multi-step restart.

    The Eulerian velocity at time ``t`` is resampled onto a fresh uniform grid
    by fitting a trigonometric polynomial to the particle data (least squares
    on the scattered positions ``x(a, t)``), then projected to be solenoidal
    and used as the initial velocity of a new series whose labels are the
    positions at ``t``. Accuracy is bounded by the resampling fit.
    """
    from scipy.sparse.linalg import LinearOperator, lsqr

    from .spectral import helmholtz_decompose

    st = evaluate(series, t, check=False)
    grid = series.grid
    pts = st.map.positions().reshape(grid.dim, -1).T
    vals = st.velocity.data.reshape(grid.dim, -1)
    lengths = np.array(grid.lengths)
    pts = np.mod(pts, lengths)
    kk = [np.fft.fftfreq(n, 1.0 / n) * (2 * math.pi / L) for n, L in zip(grid.shape, grid.lengths)]
    Kmesh = np.stack(np.meshgrid(*kk, indexing="ij")).reshape(grid.dim, -1)
    keep = np.ones(Kmesh.shape[1], dtype=bool)
    for j, n in enumerate(grid.shape):
        keep &= np.abs(np.round(Kmesh[j] * grid.lengths[j] / (2 * math.pi))) < n // 2
    K = Kmesh[:, keep]
    phase = pts @ K
    C, S = np.cos(phase), np.sin(phase)

    def mv(c):
        return C @ c[: K.shape[1]] - S @ c[K.shape[1]:]

    def rmv(r):
        return np.concatenate([C.T @ r, -S.T @ r])

    op = LinearOperator((pts.shape[0], 2 * K.shape[1]), matvec=mv, rmatvec=rmv)
    coords = grid.points()
    new = np.empty((grid.dim, grid.size))
    for i in range(grid.dim):
        sol = lsqr(op, vals[i], atol=tol, btol=tol, iter_lim=iterations)[0]
        ph = coords @ K
        new[i] = np.cos(ph) @ sol[: K.shape[1]] - np.sin(ph) @ sol[K.shape[1]:]
    v_new = VectorField(grid, new.reshape((grid.dim,) + grid.shape))
    parts = helmholtz_decompose(v_new)
    v_new = parts.solenoidal + parts.mean.reshape((-1,) + (1,) * grid.dim)
    return solve_to_order(v_new, config or series.config, t0=float(t))
