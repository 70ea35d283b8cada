"""Pseudo-spectral field arithmetic on periodic boxes.

Fields live on a uniform periodic grid of 2 or 3 dimensions. Derivatives are
taken on the trigonometric interpolant (real FFT, Nyquist wavenumber zeroed),
so every operator here is exact for band-limited data and all of them share the
same discrete wavenumbers. That shared choice is what makes ``curl(gradient)``,
``divergence(curl)`` and the Helmholtz projections vanish to rounding error.

Array layout: a scalar field is ``grid.shape``, a vector field
``(d, *grid.shape)`` and a tensor field ``(d, d, *grid.shape)`` with
``T[i, j] = d u_i / d a_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DimensionMismatchError, GridMismatchError, InconsistentSourceError, NonFiniteFieldError

__all__ = [
    "Grid",
    "Field",
    "ScalarField",
    "VectorField",
    "TensorField",
    "HelmholtzParts",
    "set_workers",
    "gradient",
    "curl",
    "divergence",
    "laplacian",
    "helmholtz_decompose",
    "invert_curl_div",
    "dealias",
    "interpolate",
    "random_band_limited",
    "invert_gradient",
    "as_vector",
]

_WORKERS = 1


def set_workers(n: int) -> None:
    """Number of threads handed to the FFT backend (default 1)."""
    global _WORKERS
    if n < 1:
        raise ValueError("worker count must be positive")
    _WORKERS = int(n)


@dataclass(frozen=True)
class Grid:
    shape: tuple[int, ...]
    lengths: tuple[float, ...] = field(default=())

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) not in (2, 3):
            raise DimensionMismatchError(f"grid dimension must be 2 or 3, got {len(shape)}")
        for n in shape:
            if n < 4 or n % 2:
                raise ValueError(f"resolution must be an even integer >= 4, got {n}")
        lengths = tuple(float(x) for x in self.lengths) or (2 * math.pi,) * len(shape)
        if len(lengths) != len(shape):
            raise DimensionMismatchError("one domain length per axis is required")
        if not all(math.isfinite(x) and x > 0 for x in lengths):
            raise ValueError("domain lengths must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def cube(cls, n: int, dim: int = 3, length: float = 2 * math.pi) -> "Grid":
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def coordinates(self) -> np.ndarray:
        """Grid point positions, shape ``(d, *shape)``."""
        axes = [np.arange(n) * h for n, h in zip(self.shape, self.spacing)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """Grid points flattened to ``(size, d)`` in row-major order."""
        return self.coordinates().reshape(self.dim, -1).T

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.shape[:-1] + (self.shape[-1] // 2 + 1,)

    @cached_property
    def mode_indices(self) -> tuple[np.ndarray, ...]:
        """Integer mode numbers in the real-FFT layout, broadcastable."""
        idx = []
        for ax, n in enumerate(self.shape):
            m = np.fft.rfftfreq(n, 1.0 / n) if ax == self.dim - 1 else np.fft.fftfreq(n, 1.0 / n)
            bshape = [1] * self.dim
            bshape[ax] = m.size
            idx.append(m.reshape(bshape))
        return tuple(idx)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Derivative wavenumbers with the Nyquist mode zeroed."""
        ks = []
        for ax, (n, L) in enumerate(zip(self.shape, self.lengths)):
            m = self.mode_indices[ax].copy()
            m[np.abs(m) == n // 2] = 0.0
            ks.append(m * (2 * math.pi / L))
        return tuple(ks)

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers) + np.zeros(self.spectral_shape)

    @cached_property
    def inverse_k_squared(self) -> np.ndarray:
        k2 = self.k_squared
        out = np.zeros_like(k2)
        nz = k2 > 0
        out[nz] = 1.0 / k2[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        mask = np.ones(self.spectral_shape, dtype=bool)
        for m, n in zip(self.mode_indices, self.shape):
            mask &= np.abs(m) < n / 3.0
        return mask

    def fft(self, data: np.ndarray) -> np.ndarray:
        return sfft.rfftn(data, axes=self.axes, workers=_WORKERS)

    def ifft(self, data_hat: np.ndarray) -> np.ndarray:
        return sfft.irfftn(data_hat, s=self.shape, axes=self.axes, workers=_WORKERS)


class Field:
    """Real-valued field over a :class:`Grid`; the data array is read-only."""

    rank = 0

    def __init__(self, grid: Grid, data, *, check_finite: bool = True):
        arr = np.array(data, dtype=float)
        expected = (grid.dim,) * self.rank + grid.shape
        if arr.shape != expected:
            raise DimensionMismatchError(
                f"{type(self).__name__} on grid {grid.shape} needs shape {expected}, got {arr.shape}"
            )
        if check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteFieldError(f"{type(self).__name__} contains non-finite values")
        arr.flags.writeable = False
        self.grid = grid
        self.data = arr

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid, np.zeros((grid.dim,) * cls.rank + grid.shape))

    def _new(self, data):
        return type(self)(self.grid, data)

    def _other(self, other):
        if isinstance(other, Field):
            if type(other) is not type(self):
                raise DimensionMismatchError("cannot combine fields of different rank")
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.data
        return other

    def __add__(self, other):
        return self._new(self.data + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._new(self.data - self._other(other))

    def __rsub__(self, other):
        return self._new(self._other(other) - self.data)

    def __mul__(self, alpha):
        if isinstance(alpha, Field):
            return NotImplemented
        return self._new(self.data * alpha)

    __rmul__ = __mul__

    def __truediv__(self, alpha):
        return self._new(self.data / alpha)

    def __neg__(self):
        return self._new(-self.data)

    def __getitem__(self, i):
        return self.data[i]

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def mean(self):
        axes = tuple(range(self.rank, self.data.ndim))
        return np.mean(self.data, axis=axes)

    def spectrum(self) -> np.ndarray:
        return self.grid.fft(self.data)

    def __repr__(self):
        return f"{type(self).__name__}(grid={self.grid.shape}, |f|_inf={self.norm_inf():.3g})"


class ScalarField(Field):
    rank = 0


class VectorField(Field):
    rank = 1

    @property
    def components(self) -> int:
        return self.grid.dim


class TensorField(Field):
    rank = 2


def _require(u, cls, name):
    if not isinstance(u, cls):
        raise DimensionMismatchError(f"{name} expects a {cls.__name__}, got {type(u).__name__}")


def gradient(f: Field) -> Field:
    """Spectral gradient.

    A scalar field maps to a vector field; a vector field ``u`` maps to the
    tensor ``T[i, j] = d u_i / d a_j``.
    """
    grid = f.grid
    if isinstance(f, ScalarField):
        fh = grid.fft(f.data)
        return VectorField(grid, np.stack([grid.ifft(1j * k * fh) for k in grid.wavenumbers]))
    if isinstance(f, VectorField):
        uh = grid.fft(f.data)
        out = np.empty((grid.dim, grid.dim) + grid.shape)
        for j, k in enumerate(grid.wavenumbers):
            out[:, j] = grid.ifft(1j * k * uh)
        return TensorField(grid, out)
    raise DimensionMismatchError("gradient expects a scalar or vector field")


def _curl_hat(grid: Grid, uh: np.ndarray) -> np.ndarray:
    k = grid.wavenumbers
    if grid.dim == 2:
        return 1j * (k[0] * uh[1] - k[1] * uh[0])
    return 1j * np.stack([
        k[1] * uh[2] - k[2] * uh[1],
        k[2] * uh[0] - k[0] * uh[2],
        k[0] * uh[1] - k[1] * uh[0],
    ])


def curl(u: VectorField) -> Field:
    """Curl; a scalar field in 2D, a vector field in 3D."""
    _require(u, VectorField, "curl")
    grid = u.grid
    wh = _curl_hat(grid, grid.fft(u.data))
    if grid.dim == 2:
        return ScalarField(grid, grid.ifft(wh))
    return VectorField(grid, grid.ifft(wh))


def divergence(u: VectorField) -> ScalarField:
    _require(u, VectorField, "divergence")
    grid = u.grid
    uh = grid.fft(u.data)
    return ScalarField(grid, grid.ifft(sum(1j * k * uh[j] for j, k in enumerate(grid.wavenumbers))))


def laplacian(f: Field) -> Field:
    grid = f.grid
    return f._new(grid.ifft(-grid.k_squared * grid.fft(f.data)))


class HelmholtzParts(NamedTuple):
    solenoidal: VectorField
    gradient: VectorField
    mean: np.ndarray


def helmholtz_decompose(u: VectorField) -> HelmholtzParts:
    """Split ``u`` into zero-mean solenoidal and gradient parts plus its mean.

    The three parts sum back to ``u`` up to rounding; the decomposition is
    unique on the periodic box.
    """
    _require(u, VectorField, "helmholtz_decompose")
    grid = u.grid
    uh = grid.fft(u.data)
    k = grid.wavenumbers
    kdotu = sum(kj * uh[j] for j, kj in enumerate(k)) * grid.inverse_k_squared
    grad = grid.ifft(np.stack([kj * kdotu for kj in k]))
    mean = u.mean()
    sol = u.data - grad - mean.reshape((-1,) + (1,) * grid.dim)
    return HelmholtzParts(VectorField(grid, sol), VectorField(grid, grad), mean)


def invert_curl_div(w: Field, d: ScalarField, tol: float = 1e-8) -> VectorField:
    """Zero-mean ``u`` with ``curl(u) = w`` and ``divergence(u) = d``.

    ``w`` is a scalar in 2D and a vector in 3D. Raises
    :class:`InconsistentSourceError` when ``w`` is not divergence free (3D) or
    when either source carries a mean that no periodic field can produce.
    """
    _require(d, ScalarField, "invert_curl_div")
    grid = d.grid
    if w.grid != grid:
        raise GridMismatchError("curl and divergence sources live on different grids")
    expected = ScalarField if grid.dim == 2 else VectorField
    _require(w, expected, "invert_curl_div")

    wh = grid.fft(w.data)
    dh = grid.fft(d.data)
    k = grid.wavenumbers
    scale = max(w.norm_inf(), d.norm_inf(), np.finfo(float).tiny)
    means = np.abs(np.concatenate([np.atleast_1d(w.mean()), np.atleast_1d(d.mean())]))
    if means.max() > tol * scale:
        raise InconsistentSourceError(f"sources carry a nonzero mean ({means.max():.3e})")
    if grid.dim == 3:
        divw = np.max(np.abs(grid.ifft(sum(1j * kj * wh[j] for j, kj in enumerate(k)))))
        kmax = max(float(np.max(np.abs(kj))) for kj in k)
        if divw > tol * max(w.norm_inf(), np.finfo(float).tiny) * kmax:
            raise InconsistentSourceError(f"curl source is not divergence free (|div w|_inf = {divw:.3e})")

    inv = grid.inverse_k_squared
    if grid.dim == 2:
        uh = np.stack([
            1j * k[1] * wh - 1j * k[0] * dh,
            -1j * k[0] * wh - 1j * k[1] * dh,
        ]) * inv
    else:
        uh = (_curl_hat(grid, wh) - np.stack([1j * kj * dh for kj in k])) * inv
    return VectorField(grid, grid.ifft(uh))


def dealias(f: Field) -> Field:
    """2/3-rule truncation of every component."""
    grid = f.grid
    return f._new(grid.ifft(grid.fft(f.data) * grid.dealias_mask))


def interpolate(f: Field, points, chunk: int = 512) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` at arbitrary points.

    ``points`` has shape ``(M, d)``. Returns ``(M,)`` for scalars and
    ``(M, *component_shape)`` otherwise. Cost is ``O(M * size)``; exact for
    band-limited data.
    """
    grid = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != grid.dim:
        raise DimensionMismatchError(f"points must have {grid.dim} coordinates")
    comp_shape = f.data.shape[: f.rank]
    coeffs = sfft.fftn(f.data, axes=grid.axes, workers=_WORKERS) / grid.size
    coeffs = coeffs.reshape((-1,) + grid.shape)
    kk = [np.fft.fftfreq(n, 1.0 / n) * (2 * math.pi / L) for n, L in zip(grid.shape, grid.lengths)]
    out = np.empty((pts.shape[0], coeffs.shape[0]))
    for start in range(0, pts.shape[0], chunk):
        p = pts[start:start + chunk]
        E = [np.exp(1j * np.outer(p[:, j], kk[j])) for j in range(grid.dim)]
        if grid.dim == 2:
            t = np.einsum("cab,mb->cma", coeffs, E[1])
            vals = np.einsum("cma,ma->mc", t, E[0])
        else:
            t = np.einsum("cabz,mz->cmab", coeffs, E[2])
            t = np.einsum("cmab,mb->cma", t, E[1])
            vals = np.einsum("cma,ma->mc", t, E[0])
        out[start:start + chunk] = vals.real
    return out.reshape((pts.shape[0],) + comp_shape)


def random_band_limited(grid: Grid, rank: int = 0, kmax: int = 4, rng=None, *,
                        solenoidal: bool = False, zero_mean: bool = True) -> Field:
    """Random smooth field whose modes satisfy ``|m_j| <= kmax`` on every axis."""
    rng = np.random.default_rng(rng)
    comps = (grid.dim,) * rank
    fh = rng.standard_normal(comps + grid.spectral_shape) + 1j * rng.standard_normal(comps + grid.spectral_shape)
    mask = np.ones(grid.spectral_shape, dtype=bool)
    for m, n in zip(grid.mode_indices, grid.shape):
        mask &= (np.abs(m) <= min(kmax, n // 2 - 1))
    if zero_mean:
        mask[(0,) * grid.dim] = False
    data = grid.ifft(fh * mask) * grid.size / max(1, mask.sum())
    cls = {0: ScalarField, 1: VectorField, 2: TensorField}[rank]
    out = cls(grid, data)
    if solenoidal:
        if rank != 1:
            raise DimensionMismatchError("only vector fields can be made solenoidal")
        parts = helmholtz_decompose(out)
        out = parts.solenoidal + (0.0 if zero_mean else parts.mean.reshape((-1,) + (1,) * grid.dim))
    return out


def as_vector(grid: Grid, components: Sequence[np.ndarray]) -> VectorField:
    return VectorField(grid, np.stack([np.broadcast_to(c, grid.shape) for c in components]))


def invert_gradient(g: VectorField) -> ScalarField:
    """Zero-mean ``p`` whose gradient is the curl-free part of ``g``."""
    _require(g, VectorField, "invert_gradient")
    grid = g.grid
    gh = grid.fft(g.data)
    kdotg = sum(kj * gh[j] for j, kj in enumerate(grid.wavenumbers))
    return ScalarField(grid, grid.ifft(-1j * kdotg * grid.inverse_k_squared))
