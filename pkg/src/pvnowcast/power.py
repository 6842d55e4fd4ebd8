"""
PV stations, data cleaning, features and irradiance-to-power regressors.

Each station gets its own boosted-tree model mapping seven predictors

    SSI, solar zenith, solar azimuth, sin/cos(day of year), sin/cos(hour of day)

to power normalised by the station's training maximum.  Inputs and targets
are min-max scaled to [0, 1] on the training split; predictions are clipped
to [0, 1] in normalised space before rescaling to kW.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field as dc_field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy import stats

from . import clearsky
from .errors import InsufficientDataError, TrainingError
from .gbrt import BoosterParams, GradientBoostedTrees, random_search
from .grid import interpolate_points, utc

FEATURES = ("ssi", "sza", "azi", "sin_doy", "cos_doy", "sin_hod", "cos_hod")
DOY_PERIOD = 365.25
CLEAN_TOLERANCE = 0.10
CLEAN_EPS = 1e-6
MIN_TRAIN_SAMPLES = 100


@dataclass(eq=False)
class Station:
    """A PV site with a 15-minute power series.

    ``times`` are unix seconds (UTC); ``power`` is in kW with NaN for missing.
    """

    id: str
    lon: float
    lat: float
    elevation: float
    times: np.ndarray = dc_field(default_factory=lambda: np.empty(0, dtype=np.int64))
    power: np.ndarray = dc_field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.power = np.asarray(self.power, dtype=float)
        if self.times.shape != self.power.shape:
            raise ValueError("times and power must have the same length")

    @property
    def p95(self) -> float:
        """95th percentile of the non-missing power series."""
        vals = self.power[np.isfinite(self.power)]
        return float(np.percentile(vals, 95)) if len(vals) else float("nan")

    def daylight(self) -> np.ndarray:
        return sun_up(self.lat, self.lon, self.times)


def sun_up(lat, lon, unix) -> np.ndarray:
    return clearsky.solar_position(lat, lon, np.asarray(unix, dtype=float)).zenith < 90.0


# --------------------------------------------------------------------------
# CSV I/O
# --------------------------------------------------------------------------


def _parse_time(s) -> int:
    return int(utc(s).timestamp())


def format_time(unix) -> str:
    return datetime.fromtimestamp(int(unix), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def read_registry(path) -> list:
    """Station registry ``id,lon,lat,elevation_m`` -> list of empty stations."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(Station(row["id"], float(row["lon"]), float(row["lat"]), float(row["elevation_m"])))
    return out


def read_series(path):
    """Series CSV ``timestamp_utc,power_kw``; empty cells are missing."""
    times, power = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            times.append(_parse_time(row["timestamp_utc"]))
            v = row["power_kw"].strip()
            power.append(float(v) if v and v.lower() != "nan" else np.nan)
    return np.array(times, dtype=np.int64), np.array(power, dtype=float)


def write_series(path, times, power):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_utc", "power_kw"])
        for t, p in zip(times, power):
            w.writerow([format_time(t), "" if not np.isfinite(p) else repr(float(p))])


def load_fleet(registry_path, series_dir) -> list:
    stations = read_registry(registry_path)
    for s in stations:
        path = Path(series_dir) / f"{s.id}.csv"
        if path.exists():
            s.times, s.power = read_series(path)
    return stations


# --------------------------------------------------------------------------
# cleaning
# --------------------------------------------------------------------------


def _relative_difference(a, b, eps=CLEAN_EPS):
    return abs(a - b) / max(abs(a), abs(b), eps)


def _segments(station: Station, split: str):
    ok = np.isfinite(station.power) & station.daylight()
    t = station.times[ok]
    p = station.power[ok]
    if split == "year":
        years = t.astype("datetime64[s]").astype("datetime64[Y]").astype(int) + 1970
        return [p[years == y] for y in np.unique(years)]
    if split == "halves":
        if len(t) == 0:
            return []
        mid = t.min() + (t.max() - t.min()) / 2
        return [p[t <= mid], p[t > mid]]
    raise ValueError(f"unknown split {split!r}")


def segment_statistics(values) -> dict:
    return {
        "mean": float(np.mean(values)),
        "std": float(np.std(values)),
        "skew": float(stats.skew(values)) if np.std(values) > 0 else 0.0,
    }


def clean_fleet(stations, tolerance: float = CLEAN_TOLERANCE, split: str = "year"):
    """Reject stations whose daylight statistics drift between segments.

    The series is split by calendar year (``split="year"``) or into two
    halves of the record (``split="halves"``).  A station is rejected when
    the relative difference of the mean, standard deviation or skewness
    between any two segments exceeds ``tolerance``.

    Returns ``(kept, rejected)``; ``rejected`` is a list of
    ``(station, reason)`` with reasons ``single_segment``,
    ``<metric>_drift`` or ``no_data``.
    """
    kept, rejected = [], []
    for s in stations:
        segs = [seg for seg in _segments(s, split) if len(seg) > 0]
        if not segs:
            rejected.append((s, "no_data"))
            continue
        if len(segs) < 2:
            rejected.append((s, "single_segment"))
            continue
        seg_stats = [segment_statistics(seg) for seg in segs]
        reason = None
        for i in range(len(seg_stats)):
            for j in range(i + 1, len(seg_stats)):
                for metric in ("mean", "std", "skew"):
                    if _relative_difference(seg_stats[i][metric], seg_stats[j][metric]) > tolerance:
                        reason = reason or f"{metric}_drift"
        if reason:
            rejected.append((s, reason))
        else:
            kept.append(s)
    return kept, rejected


# --------------------------------------------------------------------------
# features
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureVector:
    ssi: float
    sza: float
    azi: float
    sin_doy: float
    cos_doy: float
    sin_hod: float
    cos_hod: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FEATURES])


def cyclic_time(doy, hod):
    """Sine/cosine encodings of fractional day of year and hour of day."""
    a = 2 * np.pi * np.asarray(doy, dtype=float) / DOY_PERIOD
    b = 2 * np.pi * np.asarray(hod, dtype=float) / 24.0
    return np.sin(a), np.cos(a), np.sin(b), np.cos(b)


def _time_parts(unix):
    unix = np.asarray(unix, dtype=np.int64)
    days = unix.astype("datetime64[s]").astype("datetime64[D]")
    hod = (unix - days.astype("datetime64[s]").astype(np.int64)) / 3600.0
    doy = (days - days.astype("datetime64[Y]")).astype(int) + hod / 24.0
    return doy, hod


def feature_matrix(lat, lon, ssi, unix) -> np.ndarray:
    """(N, 7) predictor matrix for one site; rows with missing SSI are NaN."""
    ssi = np.asarray(ssi, dtype=float)
    unix = np.asarray(unix, dtype=np.int64)
    pos = clearsky.solar_position(lat, lon, unix.astype(float))
    doy, hod = _time_parts(unix)
    sd, cd, sh, ch = cyclic_time(doy, hod)
    X = np.column_stack([ssi, np.broadcast_to(pos.zenith, ssi.shape), np.broadcast_to(pos.azimuth, ssi.shape), sd, cd, sh, ch])
    X[~np.isfinite(ssi)] = np.nan
    return X


def build_features(station: Station, ssi_value, t) -> FeatureVector | None:
    """Predictors for one timestamp, or ``None`` if the SSI is missing."""
    if ssi_value is None or not np.isfinite(ssi_value):
        return None
    X = feature_matrix(station.lat, station.lon, np.array([ssi_value]), np.array([int(utc(t).timestamp())]))
    return FeatureVector(*map(float, X[0]))


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    """12-day blocks: 10 training days, then one validation and one test day.

    The order of the last two days alternates between blocks: block 0 has
    validation before test, block 1 test before validation, and so on.
    """

    start: date
    n_days: int
    block_length: int = 12
    train_days: int = 10

    @classmethod
    def for_times(cls, unix, **kwargs) -> "SplitPlan":
        days = np.asarray(unix, dtype=np.int64).astype("datetime64[s]").astype("datetime64[D]")
        first, last = days.min(), days.max()
        start = date.fromisoformat(str(first))
        return cls(start, int((last - first).astype(int)) + 1, **kwargs)

    def label(self, day: date) -> str:
        offset = (day - self.start).days
        if not 0 <= offset < self.n_days:
            raise KeyError(day)
        block, pos = divmod(offset, self.block_length)
        if pos < self.train_days:
            return "train"
        first = "val" if block % 2 == 0 else "test"
        second = "test" if block % 2 == 0 else "val"
        return first if pos == self.train_days else second

    @property
    def assignment(self) -> dict:
        return {
            self.start + timedelta(days=i): self.label(self.start + timedelta(days=i))
            for i in range(self.n_days)
        }

    def labels_for(self, unix) -> np.ndarray:
        days = np.asarray(unix, dtype=np.int64) // 86400
        d0 = (self.start - date(1970, 1, 1)).days
        offset = days - d0
        block, pos = np.divmod(offset, self.block_length)
        out = np.where(pos < self.train_days, "train", "")
        even = block % 2 == 0
        first = pos == self.train_days
        out = np.where((~first) & (pos >= self.train_days), np.where(even, "test", "val"), out)
        out = np.where(first, np.where(even, "val", "test"), out)
        return out


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------


@dataclass(eq=False)
class StationModel:
    station_id: str
    regressor: GradientBoostedTrees
    feature_min: np.ndarray
    feature_max: np.ndarray
    target_max: float
    p95: float
    metadata: dict = dc_field(default_factory=dict)

    def _scale(self, X):
        span = np.where(self.feature_max > self.feature_min, self.feature_max - self.feature_min, 1.0)
        return (np.asarray(X, dtype=float) - self.feature_min) / span

    def predict_normalized(self, X) -> np.ndarray:
        return np.clip(self.regressor.predict(self._scale(X)), 0.0, 1.0)

    def predict(self, X) -> np.ndarray:
        """Power in kW; rows with missing predictors give NaN."""
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), np.nan)
        ok = np.all(np.isfinite(X), axis=1)
        if ok.any():
            out[ok] = self.predict_normalized(X[ok]) * self.target_max
        return out

    def to_dict(self) -> dict:
        return {
            "station_id": self.station_id,
            "features": list(FEATURES),
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "target_max": self.target_max,
            "p95": self.p95,
            "metadata": self.metadata,
            "booster": self.regressor.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "StationModel":
        return cls(
            d["station_id"],
            GradientBoostedTrees.from_dict(d["booster"]),
            np.array(d["feature_min"], dtype=float),
            np.array(d["feature_max"], dtype=float),
            float(d["target_max"]),
            float(d["p95"]),
            d.get("metadata", {}),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "StationModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def training_table(station: Station, ssi, plan: SplitPlan):
    """Daylight predictor matrix, targets and split labels for a station."""
    ssi = np.asarray(ssi, dtype=float)
    X = feature_matrix(station.lat, station.lon, ssi, station.times)
    ok = np.isfinite(station.power) & np.all(np.isfinite(X), axis=1) & (X[:, 1] < 90.0)
    labels = plan.labels_for(station.times)
    return X[ok], station.power[ok], labels[ok], station.times[ok]


def train_station_model(
    station: Station,
    ssi,
    plan: SplitPlan | None = None,
    params: BoosterParams | None = None,
    search: bool = False,
    seed: int = 0,
) -> StationModel:
    """Fit a per-station regressor on the training days.

    ``ssi`` is the irradiance at the station for every entry of
    ``station.times``.  Validation days drive early stopping (and the
    optional random search).
    """
    plan = plan or SplitPlan.for_times(station.times)
    X, y, labels, _ = training_table(station, ssi, plan)
    tr = labels == "train"
    if tr.sum() < MIN_TRAIN_SAMPLES:
        raise TrainingError(
            f"station {station.id}: {int(tr.sum())} daylight training samples, need {MIN_TRAIN_SAMPLES}",
            n_samples=int(tr.sum()),
        )
    fmin = X[tr].min(axis=0)
    fmax = X[tr].max(axis=0)
    target_max = float(y[tr].max()) if y[tr].max() > 0 else 1.0
    model = StationModel(station.id, GradientBoostedTrees(params), fmin, fmax, target_max, station.p95)
    Xs = model._scale(X)
    ys = y / target_max
    va = labels == "val"
    if search and va.any():
        model.regressor = random_search(Xs[tr], ys[tr], Xs[va], ys[va], seed=seed, base=params)
    else:
        model.regressor.fit(Xs[tr], ys[tr], Xs[va] if va.any() else None, ys[va] if va.any() else None)
    model.metadata = {
        "n_train": int(tr.sum()),
        "n_val": int(va.sum()),
        "n_trees": len(model.regressor.trees),
    }
    return model


def evaluate_station_model(model: StationModel, station: Station, ssi, plan: SplitPlan, split="test") -> dict:
    """nMAE/nRMSE/nMBE (normalised by P95) of the model on one split."""
    X, y, labels, _ = training_table(station, ssi, plan)
    sel = labels == split
    if not sel.any():
        raise InsufficientDataError(f"station {station.id} has no {split} samples")
    err = (model.predict(X[sel]) - y[sel]) / station.p95
    return {
        "nmae": float(np.mean(np.abs(err))),
        "nrmse": float(np.sqrt(np.mean(err**2))),
        "nmbe": float(np.mean(err)),
        "n": int(sel.sum()),
    }


# --------------------------------------------------------------------------
# prediction from forecasts
# --------------------------------------------------------------------------


def predict_power(model: StationModel, forecast, station: Station, method: str = "bilinear") -> np.ndarray:
    """Power per (lead, member) in kW for an SSI :class:`ForecastSet`.

    Outside daylight the output is 0; where the forecast is missing at the
    station it is NaN.
    """
    out = np.full((forecast.n_leads, forecast.n_members), np.nan)
    for lead in range(1, forecast.n_leads + 1):
        t = int(forecast.valid_time(lead).timestamp())
        if not sun_up(station.lat, station.lon, t):
            out[lead - 1] = 0.0
            continue
        ssi = np.array(
            [interpolate_points(f, [station.lon], [station.lat], method)[0] for f in forecast.members[lead - 1]]
        )
        X = feature_matrix(station.lat, station.lon, ssi, np.full(len(ssi), t))
        out[lead - 1] = model.predict(X)
    return out


@dataclass(frozen=True)
class FleetTotal:
    total: float
    n_included: int
    n_missing: int


def fleet_total(predictions) -> FleetTotal:
    """Sum of valid station predictions (mapping or sequence, NaN = missing)."""
    vals = np.asarray(list(predictions.values()) if isinstance(predictions, dict) else list(predictions), dtype=float)
    ok = np.isfinite(vals)
    return FleetTotal(float(np.sum(vals[ok])), int(ok.sum()), int((~ok).sum()))
