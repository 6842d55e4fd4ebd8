"""
Solar geometry and clear-sky irradiance.

Solar position uses the low-precision almanac ephemeris (mean longitude and
anomaly, ecliptic longitude, obliquity), which is good to a few hundredths of
a degree for 1950-2050.  No atmospheric refraction is applied, so the
horizon crossing is the geometric one.

Clear-sky global horizontal irradiance follows the Ineichen-Perez closed
form with a monthly Linke turbidity climatology and an altitude correction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date as date_cls, datetime, timezone

import numpy as np

from .errors import DimensionError, PolarConditionError
from .grid import GridField, GridGeometry, Kind, unix_seconds, utc

CSI_NIGHT_THRESHOLD = 20.0  # W m-2
CSI_MAX = 1.4
SOLAR_CONSTANT = 1367.0
_J2000_UNIX = 946728000.0  # 2000-01-01 12:00 UTC


@dataclass(frozen=True)
class SolarPosition:
    """Solar zenith, azimuth (clockwise from north) and elevation, degrees.

    Fields may be scalars or arrays of a common shape.
    """

    zenith: np.ndarray
    azimuth: np.ndarray

    @property
    def elevation(self):
        return 90.0 - self.zenith


@dataclass(frozen=True)
class ClearSkyParams:
    linke_turbidity: tuple = (3.0,) * 12
    site_elevation: float = 0.0

    def __post_init__(self):
        tl = tuple(float(x) for x in self.linke_turbidity)
        if len(tl) != 12:
            raise ValueError("linke_turbidity needs one value per calendar month")
        if not all(1.0 <= x <= 10.0 for x in tl):
            raise ValueError("Linke turbidity values must lie in [1, 10]")
        elev = np.asarray(self.site_elevation, dtype=float)
        if np.any(elev < -500) or np.any(elev > 9000):
            raise ValueError("site elevation must lie in [-500, 9000] m")
        object.__setattr__(self, "linke_turbidity", tl)

    def turbidity(self, month):
        return np.asarray(self.linke_turbidity)[np.asarray(month) - 1]


def read_turbidity_csv(path, site_elevation=0.0) -> ClearSkyParams:
    """Load a ``month,TL`` climatology with 12 rows."""
    values = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            values[int(row["month"])] = float(row["TL"])
    if sorted(values) != list(range(1, 13)):
        raise ValueError(f"{path}: expected months 1..12, got {sorted(values)}")
    return ClearSkyParams(tuple(values[m] for m in range(1, 13)), site_elevation)


def _as_unix(t):
    if isinstance(t, (datetime, str)):
        return float(unix_seconds(t))
    return np.asarray(t, dtype=float)


def _ephemeris(unix):
    """Declination and equation of time (both degrees) at unix seconds."""
    n = (unix - _J2000_UNIX) / 86400.0
    mean_lon = np.mod(280.460 + 0.9856474 * n, 360.0)
    g = np.deg2rad(np.mod(357.528 + 0.9856003 * n, 360.0))
    ecl_lon = np.deg2rad(mean_lon + 1.915 * np.sin(g) + 0.020 * np.sin(2 * g))
    obliq = np.deg2rad(23.439 - 4e-7 * n)
    ra = np.rad2deg(np.arctan2(np.cos(obliq) * np.sin(ecl_lon), np.cos(ecl_lon)))
    dec = np.rad2deg(np.arcsin(np.sin(obliq) * np.sin(ecl_lon)))
    eot = np.mod(mean_lon - ra + 180.0, 360.0) - 180.0
    return dec, eot


def solar_position(lat, lon, t) -> SolarPosition:
    """Geometric solar position for latitude/longitude (degrees) at ``t``.

    ``t`` is a datetime (UTC) or unix seconds, scalar or array broadcastable
    against ``lat``/``lon``.
    """
    unix = _as_unix(t)
    dec, eot = _ephemeris(unix)
    ut_deg = np.mod(unix, 86400.0) / 240.0  # 360 deg per day
    hour_angle = np.deg2rad(np.mod(ut_deg + np.asarray(lon) + eot, 360.0) - 180.0)
    phi = np.deg2rad(np.asarray(lat, dtype=float))
    delta = np.deg2rad(dec)

    cos_z = np.sin(phi) * np.sin(delta) + np.cos(phi) * np.cos(delta) * np.cos(hour_angle)
    zenith = np.rad2deg(np.arccos(np.clip(cos_z, -1.0, 1.0)))
    az = np.rad2deg(
        np.arctan2(
            np.sin(hour_angle),
            np.cos(hour_angle) * np.sin(phi) - np.tan(delta) * np.cos(phi),
        )
    )
    azimuth = np.mod(az + 180.0, 360.0)
    # 360.0 can appear from rounding of a tiny negative angle
    azimuth = np.where(azimuth >= 360.0, 0.0, azimuth)
    if np.ndim(zenith) == 0:
        zenith, azimuth = float(zenith), float(azimuth)
    return SolarPosition(zenith, azimuth)


def _pressure(altitude):
    return 100.0 * ((44331.514 - altitude) / 11880.516) ** (1.0 / 0.1902632)


def _airmass(zenith):
    """Kasten-Young relative air mass."""
    z = np.minimum(zenith, 90.0)
    return 1.0 / (np.cos(np.deg2rad(z)) + 0.50572 * (96.07995 - z) ** -1.6364)


def day_of_year(t):
    if isinstance(t, (datetime, str)):
        return utc(t).timetuple().tm_yday
    days = np.asarray(t, dtype="int64").astype("datetime64[s]").astype("datetime64[D]")
    return (days - days.astype("datetime64[Y]")).astype(int) + 1


def extraterrestrial(t):
    doy = day_of_year(t)
    return SOLAR_CONSTANT * (1.0 + 0.033 * np.cos(2.0 * np.pi * doy / 365.25))


def _month(t):
    if isinstance(t, (datetime, str)):
        return utc(t).month
    unix = np.asarray(t, dtype="int64")
    months = unix.astype("datetime64[s]").astype("datetime64[M]").astype(int) % 12 + 1
    return months


def clearsky_ghi(pos: SolarPosition, params: ClearSkyParams, t):
    """Ineichen-Perez clear-sky GHI in W m-2; zero with the sun below the horizon."""
    zenith = np.asarray(pos.zenith, dtype=float)
    altitude = np.asarray(params.site_elevation, dtype=float)
    tl = params.turbidity(_month(t))
    i0 = extraterrestrial(t)

    cos_z = np.maximum(np.cos(np.deg2rad(zenith)), 0.0)
    am = _airmass(zenith) * _pressure(altitude) / 101325.0
    fh1 = np.exp(-altitude / 8000.0)
    fh2 = np.exp(-altitude / 1250.0)
    cg1 = 5.09e-5 * altitude + 0.868
    cg2 = 3.92e-5 * altitude + 0.0387
    with np.errstate(invalid="ignore", over="ignore"):
        ghi = cg1 * i0 * cos_z * np.exp(-cg2 * am * (fh1 + fh2 * (tl - 1.0)))
    ghi = np.where(zenith < 90.0, ghi, 0.0)
    return float(ghi) if ghi.ndim == 0 else ghi


def clearsky_field(geometry: GridGeometry, t, params: ClearSkyParams | None = None) -> GridField:
    """Clear-sky GHI at every pixel center of ``geometry``."""
    params = params or ClearSkyParams()
    lons, lats = geometry.mesh()
    pos = solar_position(lats, lons, t)
    ghi = clearsky_ghi(pos, params, t)
    return GridField(geometry, t, np.asarray(ghi, dtype=np.float32), Kind.SSI)


def _check_geometry(a: GridField, b: GridField):
    if a.geometry != b.geometry:
        raise DimensionError("fields have different geometries")


def ssi_to_csi(
    ssi: GridField,
    clearsky: GridField,
    threshold: float = CSI_NIGHT_THRESHOLD,
    csi_max: float = CSI_MAX,
) -> GridField:
    """Clear-sky index, NaN where the clear-sky GHI is at or below ``threshold``."""
    _check_geometry(ssi, clearsky)
    if ssi.timestamp != clearsky.timestamp:
        raise DimensionError(
            f"timestamps differ: {ssi.timestamp.isoformat()} vs {clearsky.timestamp.isoformat()}"
        )
    cs = clearsky.values.astype(np.float64)
    obs = ssi.values.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        csi = np.where(cs > threshold, obs / cs, np.nan)
    csi = np.clip(csi, 0.0, csi_max)
    return GridField(ssi.geometry, ssi.timestamp, csi.astype(np.float32), Kind.CSI)


def csi_to_ssi(csi: GridField, clearsky: GridField, threshold: float = CSI_NIGHT_THRESHOLD) -> GridField:
    """SSI from clear-sky index; zero wherever the clear-sky GHI is at or below ``threshold``."""
    _check_geometry(csi, clearsky)
    cs = clearsky.values.astype(np.float64)
    ssi = np.where(cs > threshold, csi.values.astype(np.float64) * cs, 0.0)
    return GridField(csi.geometry, csi.timestamp, ssi.astype(np.float32), Kind.SSI)


def _elevation(lat, lon, unix):
    return 90.0 - solar_position(lat, lon, unix).zenith


def _bisect(lat, lon, lo, hi, rising, tol=1.0):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        up = _elevation(lat, lon, mid) > 0.0
        if up == rising:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def solar_noon(lon, day) -> float:
    """Approximate unix time of local solar noon on calendar ``day``."""
    day = day if isinstance(day, date_cls) else utc(day).date()
    t = datetime(day.year, day.month, day.day, 12, tzinfo=timezone.utc).timestamp() - lon * 240.0
    _, eot = _ephemeris(t)
    return float(t - eot * 240.0)


def daylight_window(lat, lon, day) -> tuple[datetime, datetime]:
    """Sunrise and sunset (UTC) around local solar noon of ``day``.

    Raises :class:`PolarConditionError` if the sun does not cross the horizon.
    """
    if isinstance(day, datetime):
        day = utc(day).date()
    noon = solar_noon(lon, day)
    before, after = noon - 43200.0, noon + 43200.0
    if _elevation(lat, lon, noon) <= 0.0:
        raise PolarConditionError(f"polar night at lat={lat} on {day}")
    if _elevation(lat, lon, before) > 0.0 or _elevation(lat, lon, after) > 0.0:
        raise PolarConditionError(f"midnight sun at lat={lat} on {day}")
    rise = _bisect(lat, lon, before, noon, rising=True)
    sset = _bisect(lat, lon, noon, after, rising=False)
    as_dt = lambda s: datetime.fromtimestamp(round(s), tz=timezone.utc)  # noqa: E731
    return as_dt(rise), as_dt(sset)
