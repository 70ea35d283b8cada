"""File formats: binary field records, state snapshots, series checkpoints and CSV exports.

Field record (all little-endian)::

    int64  dimension d
    int64  resolution[d]
    float64 length[d]
    float64 data[ncomp * prod(resolution)]   # component-major, row-major per component

The component count is implied by the record length, so a standalone ``.fld``
file needs no further header. Snapshot and series files wrap records with a
short magic-tagged header and store an explicit byte count for each record.
"""

from __future__ import annotations

import csv
import io as _io
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import Contour, Surface
from .lagrangian import FlowState, LagrangianMap
from .spectral import Field, Grid, ScalarField, TensorField, VectorField

_I8 = "<i8"
_F8 = "<f8"
SNAPSHOT_MAGIC = b"CFSNAP01"
SERIES_MAGIC = b"CFSERS01"

# snapshot presence flags
HAS_DISPLACEMENT = 1
HAS_VELOCITY = 2
HAS_V0 = 4
HAS_OMEGA0 = 8
HAS_ACCELERATION = 16


def fmt(x: float) -> str:
    """Shortest round-trip decimal for a 64-bit float."""
    return repr(float(x))


def field_to_bytes(f: Field) -> bytes:
    g = f.grid
    head = np.array([g.dim, *g.shape], dtype=_I8).tobytes() + np.array(g.lengths, dtype=_F8).tobytes()
    return head + np.ascontiguousarray(f.data, dtype=_F8).tobytes()


def _field_class(ncomp: int, dim: int):
    if ncomp == 1:
        return ScalarField
    if ncomp == dim:
        return VectorField
    if ncomp == dim * dim:
        return TensorField
    raise ValueError(f"cannot interpret {ncomp} components on a {dim}D grid")


def field_from_bytes(buf: bytes) -> Field:
    dim = int(np.frombuffer(buf, dtype=_I8, count=1)[0])
    if dim not in (2, 3):
        raise ValueError(f"corrupt field record: dimension {dim}")
    shape = tuple(int(n) for n in np.frombuffer(buf, dtype=_I8, count=dim, offset=8))
    off = 8 * (1 + dim)
    lengths = tuple(float(x) for x in np.frombuffer(buf, dtype=_F8, count=dim, offset=off))
    off += 8 * dim
    grid = Grid(shape, lengths)
    data = np.frombuffer(buf, dtype=_F8, offset=off)
    ncomp, rem = divmod(data.size, grid.size)
    if rem:
        raise ValueError("field record length does not match its grid")
    cls = _field_class(ncomp, dim)
    return cls(grid, data.reshape((dim,) * cls.rank + shape))


def write_field(path, f: Field) -> None:
    Path(path).write_bytes(field_to_bytes(f))


def read_field(path) -> Field:
    return field_from_bytes(Path(path).read_bytes())


def _records(blobs: Sequence[bytes]) -> bytes:
    return b"".join(struct.pack("<q", len(b)) + b for b in blobs)


def _read_records(buf: bytes, off: int, count: int):
    out = []
    for _ in range(count):
        (n,) = struct.unpack_from("<q", buf, off)
        off += 8
        out.append(field_from_bytes(buf[off:off + n]))
        off += n
    return out, off


def write_snapshot(path, state: FlowState) -> None:
    """Binary snapshot: magic, ``t``, flags, then one sized record per present field."""
    fields = [("displacement", HAS_DISPLACEMENT, state.map.displacement),
              ("velocity", HAS_VELOCITY, state.velocity),
              ("v0", HAS_V0, state.v0),
              ("omega0", HAS_OMEGA0, state.omega0),
              ("acceleration", HAS_ACCELERATION, state.acceleration)]
    flags = 0
    blobs = []
    for _, bit, f in fields:
        if f is not None:
            flags |= bit
            blobs.append(field_to_bytes(f))
    head = SNAPSHOT_MAGIC + struct.pack("<dq", float(state.t), flags)
    Path(path).write_bytes(head + _records(blobs))


def read_snapshot(path) -> FlowState:
    buf = Path(path).read_bytes()
    if buf[:8] != SNAPSHOT_MAGIC:
        raise ValueError("not a flow-state snapshot")
    t, flags = struct.unpack_from("<dq", buf, 8)
    order = [HAS_DISPLACEMENT, HAS_VELOCITY, HAS_V0, HAS_OMEGA0, HAS_ACCELERATION]
    present = [b for b in order if flags & b]
    recs, _ = _read_records(buf, 24, len(present))
    got = dict(zip(present, recs))
    if not all(b in got for b in (HAS_DISPLACEMENT, HAS_VELOCITY, HAS_V0)):
        raise ValueError("snapshot lacks displacement, velocity or v0")
    disp = got[HAS_DISPLACEMENT]
    return FlowState(LagrangianMap(disp.grid, disp, t), got[HAS_VELOCITY], got[HAS_V0],
                     omega0=got.get(HAS_OMEGA0), acceleration=got.get(HAS_ACCELERATION), strict=False)


def write_series(path, series) -> None:
    """Checkpoint: magic, ``N``, ``t0``, then ``N`` sized coefficient records."""
    head = SERIES_MAGIC + struct.pack("<qd", series.order, float(series.t0))
    Path(path).write_bytes(head + _records([field_to_bytes(c) for c in series.coefficients]))


def read_series(path, config=None):
    from .taylor import SolverConfig, TaylorSeries

    buf = Path(path).read_bytes()
    if buf[:8] != SERIES_MAGIC:
        raise ValueError("not a series checkpoint")
    N, t0 = struct.unpack_from("<qd", buf, 8)
    coeffs, _ = _read_records(buf, 24, N)
    cfg = config or SolverConfig(order=max(N, 2))
    return TaylorSeries(coeffs[0].grid, tuple(coeffs), t0, cfg)


def field_to_csv(f: Field) -> str:
    """One row per grid point: index columns then component values."""
    g = f.grid
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    idx_names = ["i", "j", "k"][: g.dim]
    comps = f.data.reshape(-1, g.size) if f.rank else f.data.reshape(1, g.size)
    w.writerow(idx_names + [f"c{n}" for n in range(comps.shape[0])])
    for flat, index in enumerate(np.ndindex(*g.shape)):
        w.writerow(list(index) + [fmt(v) for v in comps[:, flat]])
    return out.getvalue()


def contour_to_csv(contour: Contour) -> str:
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([contour.dim, contour.markers, int(contour.closed)])
    for p in contour.points:
        w.writerow([fmt(v) for v in p])
    return out.getvalue()


def contour_from_csv(text: str) -> Contour:
    rows = list(csv.reader(_io.StringIO(text)))
    dim, count, closed = (int(x) for x in rows[0])
    pts = np.array([[float(v) for v in r] for r in rows[1:1 + count]])
    if pts.shape != (count, dim):
        raise ValueError("contour CSV does not match its header")
    return Contour(pts, closed=bool(closed))


def surface_to_csv(surface: Surface) -> str:
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    V, T = surface.vertices, surface.triangles
    w.writerow([surface.dim, V.shape[0], T.shape[0]])
    for p in V:
        w.writerow([fmt(v) for v in p])
    for t in T:
        w.writerow([int(i) for i in t])
    return out.getvalue()


def surface_from_csv(text: str, rule: str = "degree5") -> Surface:
    """Rebuild a flat-triangle surface (parameterised quadrature is not stored)."""
    rows = list(csv.reader(_io.StringIO(text)))
    dim, nv, nt = (int(x) for x in rows[0])
    V = np.array([[float(v) for v in r] for r in rows[1:1 + nv]])
    T = np.array([[int(v) for v in r] for r in rows[1 + nv:1 + nv + nt]])
    if V.shape != (nv, dim) or T.shape != (nt, 3):
        raise ValueError("surface CSV does not match its header")
    return Surface.from_triangles(V, T, rule)


def bundle_to_csv(bundle) -> str:
    """Per-particle oracle diagnostics."""
    d = bundle.flow.dim
    pos = bundle.positions.reshape(d, -1)
    vel = bundle.velocity.reshape(d, -1)
    det = bundle.determinant().reshape(-1)
    gap = np.abs(bundle.vorticity - bundle.formula_vorticity())
    gap = gap.reshape(3, -1).max(axis=0) if d == 3 else gap.reshape(-1)
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    axes = "xyz"[:d]
    w.writerow(["label"] + [f"x_{a}" for a in axes] + [f"v_{a}" for a in axes] + ["det", "vorticity_pullback_gap"])
    for i in range(pos.shape[1]):
        w.writerow([i] + [fmt(v) for v in pos[:, i]] + [fmt(v) for v in vel[:, i]] + [fmt(det[i]), fmt(gap[i])])
    return out.getvalue()


def rows_to_csv(rows: Iterable[dict], columns: Sequence[str]) -> str:
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return out.getvalue()


def _cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else fmt(v)
    return str(v)


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
