"""
Synthetic weather, stations and power records.

Cloud fields are products of Gaussian "blobs" on a periodic world that is
larger than the grid, so clouds keep flowing into the domain while they are
advected.  Each day is assigned one regime:

``advect``      blobs translate at a fixed velocity
``convection``  blobs stay put while their opacity grows through the day
``clear``       CSI = 1 everywhere
``static``      blobs are frozen, CSI is constant in time

Power follows a known curve ``p95 * clip(csi * cos(sza), 0, 1)`` plus
optional seeded Gaussian noise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field as dc_field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import clearsky
from .grid import FieldSequence, GridField, GridGeometry, Kind, interpolate_points, write_grid
from .rng import SYNTHETIC, generator

REGIMES = ("advect", "convection", "clear", "static")
STEP = 900


@dataclass(frozen=True)
class BlobWeather:
    """A deterministic cloud-field generator for one day."""

    shape: tuple
    regime: str
    velocity: tuple = (0.0, 0.0)  # (u, v) px/step
    n_blobs: int = 24
    seed: int = 0
    day_index: int = 0
    margin: int = 32

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        rng = generator(self.seed, SYNTHETIC, 1, self.day_index)
        ny, nx = self.period
        object.__setattr__(self, "_rows", rng.uniform(0, ny, self.n_blobs))
        object.__setattr__(self, "_cols", rng.uniform(0, nx, self.n_blobs))
        object.__setattr__(self, "_radius", rng.uniform(3.0, 9.0, self.n_blobs) * max(self.shape) / 64)
        object.__setattr__(self, "_opacity", rng.uniform(0.35, 0.85, self.n_blobs))

    @property
    def period(self):
        return (self.shape[0] + 2 * self.margin, self.shape[1] + 2 * self.margin)

    def csi(self, k: float) -> np.ndarray:
        """CSI array at step index ``k`` (steps since the start of the day)."""
        ny, nx = self.shape
        if self.regime == "clear":
            return np.ones(self.shape)
        u, v = self.velocity if self.regime == "advect" else (0.0, 0.0)
        py, px = self.period
        opacity = self._opacity
        if self.regime == "convection":
            opacity = opacity * np.clip(k / 96.0 * 1.6, 0.05, 1.0)
        rows = np.arange(ny, dtype=float)[:, None, None]
        cols = np.arange(nx, dtype=float)[None, :, None]
        cr = np.mod(self._rows + k * v, py) - self.margin
        cc = np.mod(self._cols + k * u, px) - self.margin
        dr = np.mod(rows - cr + py / 2, py) - py / 2
        dc = np.mod(cols - cc + px / 2, px) - px / 2
        g = np.exp(-(dr**2 + dc**2) / (2 * self._radius**2))
        return np.prod(1.0 - opacity * g, axis=-1)


def csi_sequence(weather: BlobWeather, geometry: GridGeometry, start: datetime, n: int, k0: int = 0) -> FieldSequence:
    fields = [
        GridField(geometry, start + timedelta(seconds=STEP * i), weather.csi(k0 + i).astype(np.float32), Kind.CSI)
        for i in range(n)
    ]
    return FieldSequence(tuple(fields), STEP)


# --------------------------------------------------------------------------
# full datasets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    n_days: int = 10
    n_rows: int = 64
    n_cols: int = 64
    lon_min: float = 7.0
    lat_min: float = 46.0
    cell_size: float = 0.02
    start_date: str = "2020-05-01"
    regime_mix: dict = dc_field(default_factory=lambda: {"advect": 0.4, "convection": 0.2, "clear": 0.2, "static": 0.2})
    speed: float = 3.0
    n_stations: int = 20
    p95_range: tuple = (5.0, 300.0)
    elevation_range: tuple = (300.0, 1500.0)
    noise_std: float = 0.0
    seed: int = 0

    def geometry(self) -> GridGeometry:
        return GridGeometry(self.lon_min, self.lat_min, self.cell_size, self.n_cols, self.n_rows)

    def dates(self):
        d0 = date.fromisoformat(self.start_date)
        return [d0 + timedelta(days=i) for i in range(self.n_days)]


def day_regimes(spec: SyntheticSpec) -> list:
    names = [r for r in REGIMES if spec.regime_mix.get(r, 0) > 0]
    weights = np.array([spec.regime_mix[r] for r in names], dtype=float)
    weights /= weights.sum()
    rng = generator(spec.seed, SYNTHETIC, 0)
    return [str(names[i]) for i in rng.choice(len(names), size=spec.n_days, p=weights)]


def day_weather(spec: SyntheticSpec, day_index: int, regime: str) -> BlobWeather:
    rng = generator(spec.seed, SYNTHETIC, 2, day_index)
    angle = rng.uniform(0, 2 * np.pi)
    vel = (spec.speed * np.cos(angle), spec.speed * np.sin(angle))
    return BlobWeather((spec.n_rows, spec.n_cols), regime, vel, seed=spec.seed, day_index=day_index)


def daylight_steps(geometry: GridGeometry, day: date):
    """15-min timestamps of ``day`` (UTC) with the sun up at the grid center."""
    lon, lat = geometry.center
    start = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    times = [start + timedelta(seconds=STEP * i) for i in range(96)]
    unix = np.array([t.timestamp() for t in times])
    elev = 90.0 - clearsky.solar_position(lat, lon, unix).zenith
    return [(i, t) for i, (t, e) in enumerate(zip(times, elev)) if e > 0]


def power_curve(p95, csi, zenith):
    return p95 * np.clip(csi * np.cos(np.deg2rad(zenith)), 0.0, 1.0)


def _make_stations(spec: SyntheticSpec):
    rng = generator(spec.seed, SYNTHETIC, 3)
    g = spec.geometry()
    lo_lon, hi_lon = g.center_lons()[[1, -2]]
    lo_lat, hi_lat = g.center_lats()[[1, -2]]
    stations = []
    for s in range(spec.n_stations):
        stations.append(
            {
                "id": f"S{s:04d}",
                "lon": round(float(rng.uniform(lo_lon, hi_lon)), 5),
                "lat": round(float(rng.uniform(lo_lat, hi_lat)), 5),
                "elevation_m": round(float(rng.uniform(*spec.elevation_range)), 1),
                "capacity_kw": round(float(rng.uniform(*spec.p95_range)), 3),
            }
        )
    return stations


def grid_filename(kind: str, t: datetime) -> str:
    return f"{kind}_{t.strftime('%Y%m%dT%H%M%S')}.sgf"


def generate_dataset(spec: SyntheticSpec, out_dir) -> dict:
    """Write grids, station registry, power series and a manifest.

    Layout::

        out_dir/grids/csi_YYYYmmddTHHMMSS.sgf, ssi_....sgf
        out_dir/stations.csv
        out_dir/series/<id>.csv
        out_dir/regimes.csv
        out_dir/manifest.json
    """
    out = Path(out_dir)
    (out / "grids").mkdir(parents=True, exist_ok=True)
    (out / "series").mkdir(parents=True, exist_ok=True)
    geom = spec.geometry()
    stations = _make_stations(spec)
    lons = np.array([s["lon"] for s in stations])
    lats = np.array([s["lat"] for s in stations])
    caps = np.array([s["capacity_kw"] for s in stations])
    regimes = day_regimes(spec)
    noise_rng = generator(spec.seed, SYNTHETIC, 4)

    series = {s["id"]: [] for s in stations}
    for d, (day, regime) in enumerate(zip(spec.dates(), regimes)):
        weather = day_weather(spec, d, regime)
        steps = dict(daylight_steps(geom, day))
        start = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
        for i in range(96):
            t = start + timedelta(seconds=STEP * i)
            if i in steps:
                csi = GridField(geom, t, weather.csi(i).astype(np.float32), Kind.CSI)
                cs_field = clearsky.clearsky_field(geom, t)
                ssi = clearsky.csi_to_ssi(csi, cs_field)
                write_grid(out / "grids" / grid_filename("csi", t), csi)
                write_grid(out / "grids" / grid_filename("ssi", t), ssi)
                csi_st = interpolate_points(csi, lons, lats)
                zen = clearsky.solar_position(lats, lons, t).zenith
                power = power_curve(caps, csi_st, zen)
                if spec.noise_std > 0:
                    power = power + noise_rng.normal(0.0, spec.noise_std, len(caps)) * caps
                power = np.where(zen < 90.0, np.maximum(power, 0.0), 0.0)
            else:
                power = np.zeros(len(caps))
            for s, p in zip(stations, power):
                series[s["id"]].append((t, float(p)))

    with open(out / "stations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lon", "lat", "elevation_m"])
        for s in stations:
            w.writerow([s["id"], s["lon"], s["lat"], s["elevation_m"]])
    for sid, rows in series.items():
        with open(out / "series" / f"{sid}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp_utc", "power_kw"])
            for t, p in rows:
                w.writerow([t.strftime("%Y-%m-%dT%H:%M:%SZ"), repr(round(p, 6))])
    with open(out / "regimes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "regime"])
        for day, regime in zip(spec.dates(), regimes):
            w.writerow([day.isoformat(), regime])
    manifest = {
        "spec": asdict(spec),
        "geometry": asdict(geom),
        "step": STEP,
        "stations": stations,
        "regimes": dict(zip([d.isoformat() for d in spec.dates()], regimes)),
        "velocities": {
            d.isoformat(): list(day_weather(spec, i, r).velocity) for i, (d, r) in enumerate(zip(spec.dates(), regimes))
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
