"""
Georeferenced raster fields on plate carree lat/lon grids.

Fields are stored row-major with row 0 at the southern edge, so that the row
index grows northwards and the column index grows eastwards.  Missing pixels
are NaN.

The module also implements the ``SGF1`` binary container used for every
gridded file the package reads or writes::

    magic      4 bytes   b"SGF1"
    n_rows     u32
    n_cols     u32
    lon_min    f64
    lat_min    f64
    cell_size  f64
    timestamp  i64       unix seconds, UTC
    kind       u8        see :class:`Kind`
    values     n_rows * n_cols little-endian f32, row-major

All integers and floats are little-endian.
"""

from __future__ import annotations

import enum
import struct
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    DimensionError,
    FormatError,
    InsufficientDataError,
    OutOfDomainError,
)

MAGIC = b"SGF1"
_HEADER = struct.Struct("<4sIIdddqB")

#: default working and evaluation resolutions, degrees
WORKING_CELL_SIZE = 0.02
EVALUATION_CELL_SIZE = 0.08


class Kind(enum.IntEnum):
    SSI = 0
    CSI = 1
    POWER = 2
    FLOW_U = 3
    FLOW_V = 4


def utc(t) -> datetime:
    """Coerce a datetime, ISO string or unix seconds to an aware UTC datetime
    truncated to whole seconds."""
    if isinstance(t, str):
        t = datetime.fromisoformat(t.replace("Z", "+00:00"))
    elif isinstance(t, (int, float, np.integer, np.floating)):
        t = datetime.fromtimestamp(int(t), tz=timezone.utc)
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc).replace(microsecond=0)


def unix_seconds(t) -> int:
    return int(utc(t).timestamp())


@dataclass(frozen=True)
class GridGeometry:
    lon_min: float
    lat_min: float
    cell_size: float
    n_cols: int
    n_rows: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise DimensionError(f"cell_size must be positive, got {self.cell_size}")
        if self.n_cols < 1 or self.n_rows < 1:
            raise DimensionError(
                f"grid needs at least one pixel, got {self.n_rows}x{self.n_cols}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def pixel_center(self, i, j):
        """Longitude and latitude of pixel (row ``i``, column ``j``)."""
        return (
            self.lon_min + (np.asarray(j) + 0.5) * self.cell_size,
            self.lat_min + (np.asarray(i) + 0.5) * self.cell_size,
        )

    def center_lons(self) -> np.ndarray:
        return self.lon_min + (np.arange(self.n_cols) + 0.5) * self.cell_size

    def center_lats(self) -> np.ndarray:
        return self.lat_min + (np.arange(self.n_rows) + 0.5) * self.cell_size

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """2-D arrays of pixel-center longitudes and latitudes."""
        return np.meshgrid(self.center_lons(), self.center_lats())

    def fractional_index(self, lon, lat):
        """Continuous (row, col) coordinates, pixel centers at integers."""
        col = (np.asarray(lon, dtype=float) - self.lon_min) / self.cell_size - 0.5
        row = (np.asarray(lat, dtype=float) - self.lat_min) / self.cell_size - 0.5
        return row, col

    def coarsen(self, factor: int) -> "GridGeometry":
        if self.n_rows % factor or self.n_cols % factor:
            raise DimensionError(
                f"grid {self.n_rows}x{self.n_cols} not divisible by {factor}"
            )
        return GridGeometry(
            self.lon_min,
            self.lat_min,
            self.cell_size * factor,
            self.n_cols // factor,
            self.n_rows // factor,
        )

    @property
    def center(self) -> tuple[float, float]:
        return (
            self.lon_min + 0.5 * self.n_cols * self.cell_size,
            self.lat_min + 0.5 * self.n_rows * self.cell_size,
        )


@dataclass(frozen=True, eq=False)
class GridField:
    """A single 2-D raster at one UTC instant.

    ``values`` has shape ``(n_rows, n_cols)`` and dtype float32; it is made
    read-only on construction.
    """

    geometry: GridGeometry
    timestamp: datetime
    values: np.ndarray
    kind: Kind = Kind.SSI

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim == 1 and values.size == self.geometry.n_rows * self.geometry.n_cols:
            values = values.reshape(self.geometry.shape)
        if values.shape != self.geometry.shape:
            raise DimensionError(
                f"values shape {values.shape} does not match geometry {self.geometry.shape}"
            )
        kind = Kind(self.kind)
        if kind in (Kind.SSI, Kind.CSI) and np.any(values < 0):
            raise ValueError(f"{kind.name} values must be >= 0")
        if values.flags.writeable:
            values = values.copy()
            values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamp", utc(self.timestamp))
        object.__setattr__(self, "kind", kind)

    def __eq__(self, other):
        if not isinstance(other, GridField):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.timestamp == other.timestamp
            and self.kind == other.kind
            and self.values.tobytes() == other.values.tobytes()
        )

    __hash__ = None

    def with_values(self, values, **changes) -> "GridField":
        return replace(self, values=values, **changes)

    @property
    def nan_fraction(self) -> float:
        return float(np.isnan(self.values).mean())


@dataclass(frozen=True)
class FieldSequence:
    """Time-ordered fields sharing one geometry at a uniform ``step`` (s)."""

    fields: tuple
    step: int = 900

    def __post_init__(self):
        fields = tuple(self.fields)
        object.__setattr__(self, "fields", fields)
        if not fields:
            return
        geom = fields[0].geometry
        for f in fields[1:]:
            if f.geometry != geom:
                raise DimensionError("all fields in a sequence must share one geometry")
        for a, b in zip(fields[:-1], fields[1:]):
            dt = (b.timestamp - a.timestamp).total_seconds()
            if dt != self.step:
                raise ValueError(
                    f"fields must be spaced by {self.step} s, found {dt} s at {b.timestamp}"
                )

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    def __iter__(self):
        return iter(self.fields)

    @property
    def geometry(self) -> GridGeometry:
        return self.fields[0].geometry

    @property
    def last(self) -> GridField:
        return self.fields[-1]

    def stack(self) -> np.ndarray:
        """Values as a float64 array of shape (n_fields, n_rows, n_cols)."""
        return np.stack([f.values.astype(np.float64) for f in self.fields])


def write_grid(path, field: GridField) -> None:
    g = field.geometry
    header = _HEADER.pack(
        MAGIC,
        g.n_rows,
        g.n_cols,
        g.lon_min,
        g.lat_min,
        g.cell_size,
        unix_seconds(field.timestamp),
        int(field.kind),
    )
    payload = np.ascontiguousarray(field.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_grid(path) -> GridField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise FormatError(f"{path}: not an SGF1 file")
    magic, n_rows, n_cols, lon_min, lat_min, cell_size, ts, kind = _HEADER.unpack_from(data)
    try:
        kind = Kind(kind)
        geometry = GridGeometry(lon_min, lat_min, cell_size, n_cols, n_rows)
    except (ValueError, DimensionError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc
    expected = n_rows * n_cols * 4
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload has {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(n_rows, n_cols)
    return GridField(geometry, datetime.fromtimestamp(ts, tz=timezone.utc), values, kind)


def _nanmean(a, axis):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        return np.nanmean(a, axis=axis)


def downsample(field: GridField, factor: int) -> GridField:
    """Block-average by ``factor`` in both directions, ignoring NaNs.

    Blocks that are entirely NaN stay NaN.
    """
    if factor < 2:
        raise ValueError("factor must be >= 2")
    geom = field.geometry.coarsen(factor)
    v = field.values.astype(np.float64).reshape(geom.n_rows, factor, geom.n_cols, factor)
    out = _nanmean(v, axis=(1, 3))
    return GridField(geom, field.timestamp, out.astype(np.float32), field.kind)


def sample_bilinear(values: np.ndarray, rows, cols, tol: float = 0.0) -> np.ndarray:
    """Bilinear sampling at fractional (row, col) positions.

    Positions outside ``[0, n-1]`` (beyond ``tol``) give NaN.  A NaN corner
    contaminates the result only if it has a nonzero weight, so sampling
    exactly on a node returns the node value.
    """
    values = np.asarray(values)
    nr, nc = values.shape
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    inside = (
        (rows >= -tol) & (rows <= nr - 1 + tol) & (cols >= -tol) & (cols <= nc - 1 + tol)
    )
    r = np.clip(np.where(inside, rows, 0.0), 0, nr - 1)
    c = np.clip(np.where(inside, cols, 0.0), 0, nc - 1)
    r0 = np.minimum(np.floor(r).astype(np.intp), max(nr - 2, 0))
    c0 = np.minimum(np.floor(c).astype(np.intp), max(nc - 2, 0))
    r1 = np.minimum(r0 + 1, nr - 1)
    c1 = np.minimum(c0 + 1, nc - 1)
    fr = r - r0
    fc = c - c0

    out = np.zeros(r.shape)
    for ri, ci, w in (
        (r0, c0, (1 - fr) * (1 - fc)),
        (r0, c1, (1 - fr) * fc),
        (r1, c0, fr * (1 - fc)),
        (r1, c1, fr * fc),
    ):
        v = values[ri, ci].astype(np.float64)
        out += np.where(w > 0, w * v, 0.0)
    out[~inside] = np.nan
    return out


def interpolate_points(field: GridField, lons, lats, method: str = "bilinear") -> np.ndarray:
    """Vectorised :func:`interpolate_point`; raises if any point is outside."""
    g = field.geometry
    rows, cols = g.fractional_index(lons, lats)
    eps = 1e-9
    outside = (rows < -eps) | (rows > g.n_rows - 1 + eps) | (cols < -eps) | (cols > g.n_cols - 1 + eps)
    if np.any(outside):
        raise OutOfDomainError("point(s) outside the pixel-center hull of the grid")
    if method == "nearest":
        ri = np.clip(np.rint(rows).astype(np.intp), 0, g.n_rows - 1)
        ci = np.clip(np.rint(cols).astype(np.intp), 0, g.n_cols - 1)
        return field.values[ri, ci].astype(np.float64)
    if method != "bilinear":
        raise ValueError(f"unknown interpolation method {method!r}")
    return sample_bilinear(field.values, rows, cols, tol=eps)


def interpolate_point(field: GridField, lon: float, lat: float, method: str = "bilinear") -> float:
    """Value at (lon, lat) from the four surrounding pixel centers.

    Returns NaN (missing) when any contributing pixel is NaN.  ``method`` may
    be ``"nearest"`` for sensitivity checks.
    """
    return float(interpolate_points(field, np.array([lon]), np.array([lat]), method)[0])


def hourly_average(seq, hour_end) -> GridField:
    """Pixelwise NaN-ignoring mean of the fields in ``(hour_end - 1h, hour_end]``."""
    hour_end = utc(hour_end)
    start = hour_end - timedelta(hours=1)
    window = [f for f in seq if start < f.timestamp <= hour_end]
    if len(window) < 4:
        raise InsufficientDataError(
            f"hourly average ending {hour_end.isoformat()} needs 4 fields, found {len(window)}"
        )
    stack = np.stack([f.values.astype(np.float64) for f in window])
    out = _nanmean(stack, axis=0)
    first = window[0]
    return GridField(first.geometry, hour_end, out.astype(np.float32), first.kind)
