"""Material loops, spanning surfaces, circulation and vorticity flux.

Loops are closed marker sets parameterised uniformly by ``theta`` in
``[0, 2 pi)``, so the circulation integral is a periodic trapezoid sum with a
spectrally differentiated tangent. Surfaces carry a triangulation (for I/O and
orientation checks) plus quadrature nodes with vector area weights; patches
built from a parameterisation place their nodes on the exact curved surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import resample

from .errors import ContourError, DimensionMismatchError, OrientationError
from .spectral import Field, ScalarField, VectorField, interpolate

MIN_MARKERS = 16

# 7-point degree-5 rule on the reference triangle, barycentric coordinates
_S15 = math.sqrt(15.0)
_A1, _B1 = (9 + 2 * _S15) / 21, (6 - _S15) / 21
_A2, _B2 = (9 - 2 * _S15) / 21, (6 + _S15) / 21
_W1, _W2 = (155 - _S15) / 1200, (155 + _S15) / 1200
_RULE5 = (
    np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
        [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
    ]),
    np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2]),
)
_RULE1 = (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]))


def plane_basis(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed orthonormal ``(e1, e2, n)`` with ``e1 x e2 = n``."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    trial = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = trial - n * (trial @ n)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1), n


def _star_point(center, e1, e2, rho, phi):
    c = np.asarray(center, dtype=float)
    if e1 is None:
        return c + rho[..., None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    return c + rho[..., None] * (np.cos(phi)[..., None] * e1 + np.sin(phi)[..., None] * e2)


@dataclass(frozen=True)
class Contour:
    """Closed loop of ``M`` markers; ``points`` are the current images, ``labels`` the Lagrangian markers."""

    points: np.ndarray
    labels: np.ndarray | None = None
    closed: bool = True

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise DimensionMismatchError("contour points must have shape (M, 2) or (M, 3)")
        if pts.shape[0] < MIN_MARKERS:
            raise ContourError(f"a contour needs at least {MIN_MARKERS} markers, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise ContourError("contour points must be finite")
        gaps = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if np.any(gaps[:-1] == 0) or (self.closed and gaps[-1] == 0):
            raise ContourError("contour markers must be distinct")
        labels = pts if self.labels is None else np.array(self.labels, dtype=float)
        if labels.shape != pts.shape:
            raise DimensionMismatchError("labels and points must have the same shape")
        pts.flags.writeable = False
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def circle(cls, center, radius: float, markers: int = 256, normal=None) -> "Contour":
        return cls.star(center, lambda phi: np.full_like(phi, radius), markers, normal)

    @classmethod
    def star(cls, center, radius_fn: Callable[[np.ndarray], np.ndarray], markers: int = 256,
             normal=None) -> "Contour":
        """Loop ``center + r(phi) (cos phi e1 + sin phi e2)``, counter-clockwise about ``normal``."""
        phi = 2 * math.pi * np.arange(markers) / markers
        e1 = e2 = None
        if len(center) == 3:
            e1, e2, _ = plane_basis(normal if normal is not None else (0, 0, 1))
        return cls(_star_point(center, e1, e2, np.asarray(radius_fn(phi), float), phi))

    @property
    def markers(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def tangent(self) -> np.ndarray:
        """``dx/dtheta`` at every marker (spectral differentiation in ``theta``)."""
        M = self.markers
        ph = np.fft.fft(self.points, axis=0)
        k = np.fft.fftfreq(M, 1.0 / M)
        if M % 2 == 0:
            k[M // 2] = 0.0
        return np.fft.ifft(1j * k[:, None] * ph, axis=0).real

    def length(self) -> float:
        return float(2 * math.pi / self.markers * np.sum(np.linalg.norm(self.tangent(), axis=1)))

    def max_spacing(self) -> float:
        return float(np.max(np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)))

    def refined(self) -> "Contour":
        """Double the marker count by trigonometric interpolation of the labels in ``theta``."""
        return Contour(resample(self.labels, 2 * self.markers, axis=0), closed=self.closed)

    def moved(self, images: np.ndarray) -> "Contour":
        return Contour(images, self.labels, self.closed)


def _sample(source, points: np.ndarray, what: str) -> np.ndarray:
    """Evaluate a velocity/vorticity source at ``points`` (``(M, d)``)."""
    if isinstance(source, Field):
        return interpolate(source, points)
    if hasattr(source, "velocity") and what == "velocity":
        return np.moveaxis(source.velocity(points.T), 0, -1)
    if hasattr(source, "vorticity") and what == "vorticity":
        w = source.vorticity(points.T)
        return w if w.ndim == 1 else np.moveaxis(w, 0, -1)
    if callable(source):
        return np.asarray(source(points))
    arr = np.asarray(source, dtype=float)
    if arr.shape[0] != points.shape[0]:
        raise DimensionMismatchError(f"{what} samples do not match the {points.shape[0]} points")
    return arr


def circulation(contour: Contour, velocity) -> float:
    """``Gamma = closed-integral v . dx`` over the marker images.

    ``velocity`` is an ``(M, d)`` array of samples at the markers, a field
    (interpolated at ``contour.points``), an object with a ``velocity(x)``
    method or a callable on ``(M, d)`` points.
    """
    if not contour.closed:
        raise ContourError("circulation needs a closed contour")
    v = _sample(velocity, contour.points, "velocity")
    if not np.all(np.isfinite(v)):
        raise ContourError("velocity could not be evaluated at every marker")
    # Parseval form of the periodic trapezoid sum; exactly zero for a constant velocity
    M = contour.markers
    k = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        k[M // 2] = 0.0
    vh = np.fft.fft(v, axis=0)
    th = 1j * k[:, None] * np.fft.fft(contour.points, axis=0)
    return float(2 * math.pi / M**2 * np.sum(np.conj(vh) * th).real)


def initial_circulation(contour: Contour, v0) -> float:
    """Circulation of the initial velocity along the undeformed loop (the labels)."""
    return circulation(Contour(contour.labels, closed=contour.closed), v0)


@dataclass(frozen=True)
class Surface:
    """Oriented patch in Lagrangian space.

    ``quad_points`` are quadrature nodes and ``quad_vectors`` the matching
    oriented area weights (``n dsigma`` times the rule weight): shape
    ``(Q, 3)`` in 3D and ``(Q,)`` in 2D, where the normal is ``+z``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    quad_points: np.ndarray
    quad_vectors: np.ndarray

    def __post_init__(self):
        tri = np.asarray(self.triangles, dtype=int)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise DimensionMismatchError("triangles must be an (T, 3) index array")
        object.__setattr__(self, "triangles", tri)
        if np.any(self.areas <= 0):
            raise OrientationError("every triangle needs a positive area")
        _check_orientation(tri)
        if self.dim == 2 and np.any(self._signed_areas() < 0):
            raise OrientationError("planar triangles must be counter-clockwise")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def _edges(self):
        V = self.vertices
        t = self.triangles
        return V[t[:, 1]] - V[t[:, 0]], V[t[:, 2]] - V[t[:, 0]]

    def _signed_areas(self) -> np.ndarray:
        e1, e2 = self._edges()
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        if self.dim == 2:
            return np.abs(self._signed_areas())
        e1, e2 = self._edges()
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    @property
    def normals(self) -> np.ndarray:
        """Unit normals of the flat triangles (``(T,)`` signs in 2D)."""
        if self.dim == 2:
            return np.sign(self._signed_areas())
        e1, e2 = self._edges()
        n = np.cross(e1, e2)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def total_area(self) -> float:
        w = self.quad_vectors
        return float(np.sum(np.abs(w)) if w.ndim == 1 else np.sum(np.linalg.norm(w, axis=1)))

    def boundary_edges(self) -> list[tuple[int, int]]:
        seen = {}
        for a, b, c in self.triangles:
            for e in ((a, b), (b, c), (c, a)):
                seen[e] = seen.get(e, 0) + 1
        return [e for e in seen if (e[1], e[0]) not in seen]

    # constructors ---------------------------------------------------------
    @classmethod
    def from_triangles(cls, vertices, triangles, rule: str = "degree5") -> "Surface":
        """Flat-triangle patch; quadrature by a 7-point degree-5 rule (or ``"centroid"``)."""
        V = np.asarray(vertices, dtype=float)
        T = np.asarray(triangles, dtype=int)
        bary, w = {"degree5": _RULE5, "centroid": _RULE1}[rule]
        P = np.einsum("qk,tkd->tqd", bary, V[T])
        e1 = V[T[:, 1]] - V[T[:, 0]]
        e2 = V[T[:, 2]] - V[T[:, 0]]
        if V.shape[1] == 2:
            area_vec = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
            qv = (area_vec[:, None] * w[None, :]).reshape(-1)
        else:
            area_vec = 0.5 * np.cross(e1, e2)
            qv = (area_vec[:, None, :] * w[None, :, None]).reshape(-1, 3)
        return cls(V, T, P.reshape(-1, V.shape[1]), qv)

    @classmethod
    def star(cls, center, radius_fn: Callable[[np.ndarray], np.ndarray], normal=None,
             n_radial: int = 24, n_angular: int = 128) -> "Surface":
        """Planar patch bounded by the star-shaped loop of :meth:`Contour.star`.

        Quadrature is Gauss-Legendre in the radial fraction and trapezoidal in
        angle on the exact parameterisation, so it converges spectrally.
        """
        c = np.asarray(center, dtype=float)
        e1 = e2 = n = None
        if c.size == 3:
            e1, e2, n = plane_basis(normal if normal is not None else (0, 0, 1))
        xg, wg = np.polynomial.legendre.leggauss(n_radial)
        frac, wf = 0.5 * (xg + 1), 0.5 * wg
        phi = 2 * math.pi * np.arange(n_angular) / n_angular
        r = np.asarray(radius_fn(phi), float)
        F, P = np.meshgrid(frac, phi, indexing="ij")
        R = F * r[None, :]
        pts = _star_point(c, e1, e2, R, P).reshape(-1, c.size)
        # area element: frac * r(phi)^2 dfrac dphi
        dA = (F * r[None, :] ** 2 * wf[:, None] * (2 * math.pi / n_angular)).reshape(-1)
        qv = dA if n is None else dA[:, None] * n[None, :]
        verts, tris = _polar_mesh(c, e1, e2, radius_fn, max(4, n_radial // 3), n_angular)
        return cls(verts, tris, pts, qv)

    @classmethod
    def disk(cls, center, radius: float, normal=None, n_radial: int = 24, n_angular: int = 128) -> "Surface":
        return cls.star(center, lambda phi: np.full_like(phi, radius), normal, n_radial, n_angular)

    @classmethod
    def cap(cls, center, radius: float, normal=(0, 0, 1), height: float = 0.5,
            n_polar: int = 24, n_angular: int = 128) -> "Surface":
        """Spherical cap spanning the circle of :meth:`Contour.circle`, bulging ``height`` along ``normal``."""
        if height <= 0:
            raise ValueError("cap height must be positive")
        c = np.asarray(center, dtype=float)
        e1, e2, n = plane_basis(normal)
        Rs = (radius ** 2 + height ** 2) / (2 * height)
        cs = c + (height - Rs) * n
        alpha0 = math.atan2(radius, Rs - height)
        xg, wg = np.polynomial.legendre.leggauss(n_polar)
        al, wa = 0.5 * alpha0 * (xg + 1), 0.5 * alpha0 * wg
        phi = 2 * math.pi * np.arange(n_angular) / n_angular
        A, P = np.meshgrid(al, phi, indexing="ij")

        def point(a, p):
            return cs + Rs * (np.sin(a)[..., None] * (np.cos(p)[..., None] * e1 + np.sin(p)[..., None] * e2)
                              + np.cos(a)[..., None] * n)

        radial = point(A, P) - cs
        qv = (radial * (Rs * np.sin(A) * wa[:, None] * (2 * math.pi / n_angular))[..., None]).reshape(-1, 3)
        nr = max(4, n_polar // 3)
        verts = [point(np.array(0.0), np.array(0.0))]
        for i in range(1, nr + 1):
            verts.extend(point(np.full(n_angular, alpha0 * i / nr), phi))
        return cls(np.array(verts), _ring_triangles(nr, n_angular), point(A, P).reshape(-1, 3), qv)


def _ring_triangles(rings: int, n_angular: int) -> np.ndarray:
    tris = []
    for j in range(n_angular):
        tris.append((0, 1 + j, 1 + (j + 1) % n_angular))
    for i in range(1, rings):
        base_in, base_out = 1 + (i - 1) * n_angular, 1 + i * n_angular
        for j in range(n_angular):
            j2 = (j + 1) % n_angular
            tris.append((base_in + j, base_out + j, base_out + j2))
            tris.append((base_in + j, base_out + j2, base_in + j2))
    return np.array(tris)


def _polar_mesh(c, e1, e2, radius_fn, rings, n_angular):
    phi = 2 * math.pi * np.arange(n_angular) / n_angular
    r = np.asarray(radius_fn(phi), float)
    verts = [c.copy()]
    for i in range(1, rings + 1):
        verts.extend(_star_point(c, e1, e2, r * i / rings, phi))
    return np.array(verts), _ring_triangles(rings, n_angular)


def _check_orientation(tri: np.ndarray):
    directed = set()
    for a, b, c in tri:
        for e in ((a, b), (b, c), (c, a)):
            if e in directed:
                raise OrientationError(f"edge {e} is traversed twice in the same direction")
            directed.add(e)


def vorticity_flux(surface: Surface, omega) -> float:
    """``sum omega . n dsigma`` over the surface quadrature nodes.

    ``omega`` is a field (trigonometric interpolation), an object with a
    ``vorticity(x)`` method, a callable on ``(Q, d)`` points or an array of
    samples at ``surface.quad_points``.
    """
    w = _sample(omega, surface.quad_points, "vorticity")
    qv = surface.quad_vectors
    if qv.ndim == 1:
        if w.ndim != 1:
            raise DimensionMismatchError("a planar surface needs a scalar vorticity")
        return float(np.sum(w * qv))
    if w.shape != qv.shape:
        raise DimensionMismatchError("a 3D surface needs a vector vorticity")
    return float(np.sum(w * qv))


def advect_contour(contour: Contour, transport, t: float | None = None, *, tol: float = 1e-12,
                   max_spacing: float | None = None, max_refinements: int = 6) -> Contour:
    """Image of the material loop at time ``t``.

    ``transport`` may be an :class:`~cauchyflow.oracle.AnalyticFlow` (tracked
    with the oracle to ``tol``), a :class:`~cauchyflow.lagrangian.FlowState` or
    :class:`~cauchyflow.lagrangian.LagrangianMap` (displacement interpolated at
    the labels), a :class:`~cauchyflow.taylor.TaylorSeries` or a callable
    mapping ``(M, d)`` labels to positions. With ``max_spacing`` the marker
    count is doubled until neighbouring images are closer than that.
    """
    from .lagrangian import FlowState, LagrangianMap
    from .oracle import AnalyticFlow, track
    from .taylor import TaylorSeries, positions_at

    def images(labels):
        if isinstance(transport, AnalyticFlow):
            if t is None:
                raise ValueError("oracle transport needs a time")
            return track(transport, labels.T, t, tol).positions.T
        if isinstance(transport, FlowState):
            return labels + interpolate(transport.map.displacement, labels)
        if isinstance(transport, LagrangianMap):
            return labels + interpolate(transport.displacement, labels)
        if isinstance(transport, TaylorSeries):
            return positions_at(transport, labels, t)
        if callable(transport):
            return np.asarray(transport(labels), float)
        raise TypeError(f"cannot transport a contour with {type(transport).__name__}")

    src = Contour(contour.labels, closed=contour.closed)
    out = src.moved(images(src.labels))
    for _ in range(max_refinements if max_spacing else 0):
        if out.max_spacing() <= max_spacing:
            break
        src = src.refined()
        out = src.moved(images(src.labels))
    if not np.all(np.isfinite(out.points)):
        raise ContourError("transport is undefined at some marker")
    return out


def lagrangian_circulation(contour: Contour, state) -> float:
    """Circulation of ``x_dot`` around the image of ``contour.labels`` under ``state``.

    Works entirely in label space: positions and velocities are interpolated
    from the Lagrangian fields at the markers.
    """
    labels = contour.labels
    images = labels + interpolate(state.map.displacement, labels)
    vel = interpolate(state.velocity, labels)
    return circulation(Contour(images, labels, contour.closed), vel)


@dataclass(frozen=True)
class CirculationReport:
    t: float
    gamma: float
    gamma0: float
    flux0: float
    drift: float
    stokes_gap: float
    markers: int = 0

    def __post_init__(self):
        for name in ("t", "gamma", "gamma0", "flux0", "drift", "stokes_gap"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"report entry {name} is not finite")


def relative_drift(value: float, reference: float, eps: float = 1e-12) -> float:
    return abs(value - reference) / max(abs(reference), eps)


def circulation_history(flow, contour: Contour, surface: Surface, times: Sequence[float],
                        tol: float = 1e-12) -> list[CirculationReport]:
    """Circulation of an oracle-advected loop at each time, against its initial value and flux."""
    from .oracle import track_times

    gamma0 = initial_circulation(contour, flow)
    flux0 = vorticity_flux(surface, flow)
    tt = [float(t) for t in times]
    bundles = track_times(flow, contour.labels.T, tt, tol)
    reports = []
    for t, b in zip(tt, bundles):
        img = Contour(b.positions.T, contour.labels)
        g = circulation(img, b.velocity.T)
        reports.append(CirculationReport(t, g, gamma0, flux0, relative_drift(g, gamma0),
                                         relative_drift(gamma0, flux0), contour.markers))
    return reports


def refinement_study(gamma_of_m: Callable[[int], float], markers: Sequence[int], floor: float = 1e-13):
    """Errors against the finest count and observed orders ``log2(e_M / e_2M)``.

    Orders are only reported while both errors sit above ``floor`` (relative);
    once the quadrature is converged to rounding the entry is ``nan``.
    """
    ms = sorted(markers)
    vals = [gamma_of_m(m) for m in ms]
    ref = vals[-1]
    scale = max(abs(ref), 1e-300)
    errs = [abs(v - ref) / scale for v in vals]
    rows = []
    for i, m in enumerate(ms):
        order = math.nan
        if i + 1 < len(ms) - 1 and errs[i] > floor and errs[i + 1] > floor:
            order = math.log(errs[i] / errs[i + 1]) / math.log(ms[i + 1] / m)
        rows.append({"markers": m, "gamma": vals[i], "error": errs[i], "order": order})
    return rows
