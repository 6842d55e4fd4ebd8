"""
Deterministic and probabilistic forecast verification.

Scores follow the usual normalised definitions::

    nMAE  = mean(|ens_mean - y|) / f
    nRMSE = sqrt(mean((ens_mean - y)**2)) / f
    nMBE  = mean(ens_mean - y) / f
    nCRPS = mean(CRPS) / f

with ``f`` the station P95 for power and 1 for irradiance.  Interval scores
use the central ``1 - alpha`` interval between empirical quantiles computed
by linear interpolation between order statistics (position
``p * (E - 1) + 1``, the ``"linear"`` rule of :func:`numpy.quantile`).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from datetime import date, datetime

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, MixedEnsembleError, UndefinedIntervalError
from .rng import RANK_TIES, generator

METRICS = ("nmae", "nrmse", "nmbe", "ncrps", "picp", "pinaw", "mpiw")


@dataclass(frozen=True)
class EnsembleSample:
    members: tuple
    observation: float
    normalizer: float = 1.0

    def __post_init__(self):
        members = tuple(sorted(float(m) for m in np.atleast_1d(self.members)))
        if not members:
            raise ValueError("an ensemble needs at least one member")
        if not self.normalizer > 0:
            raise ValueError("normalizer must be positive")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)


def _as_arrays(samples):
    if not samples:
        raise InsufficientDataError("no samples to score")
    sizes = {s.size for s in samples}
    if len(sizes) != 1:
        raise MixedEnsembleError(f"samples have different ensemble sizes: {sorted(sizes)}")
    members = np.array([s.members for s in samples], dtype=float)
    obs = np.array([s.observation for s in samples], dtype=float)
    norm = np.array([s.normalizer for s in samples], dtype=float)
    return members, obs, norm


# --------------------------------------------------------------------------
# array kernels: members (N, E), obs (N,)
# --------------------------------------------------------------------------


def crps_ensemble(members, obs) -> np.ndarray:
    """Closed-form CRPS of empirical ensembles, one value per row.

    ``mean|X - y| - 0.5 * mean_{i,j} |X_i - X_j|``, the pair term using all
    ordered pairs including ``i == j``.
    """
    x = np.sort(np.asarray(members, dtype=float), axis=-1)
    y = np.asarray(obs, dtype=float)
    e = x.shape[-1]
    abs_err = np.abs(x - y[..., None]).mean(axis=-1)
    # sum_{i,j} |x_i - x_j| = 2 * sum_i (2i - E + 1) x_(i) for sorted x
    w = 2.0 * np.arange(e) - e + 1.0
    spread = 2.0 * (x * w).sum(axis=-1) / (e * e)
    return abs_err - 0.5 * spread


def interval_bounds(members, alpha: float = 0.1):
    x = np.asarray(members, dtype=float)
    if x.shape[-1] < 2:
        raise UndefinedIntervalError("prediction intervals need at least two members")
    lo, hi = np.quantile(x, [alpha / 2.0, 1.0 - alpha / 2.0], axis=-1, method="linear")
    return lo, hi


def _sample_scores(members, obs, norm, alpha):
    """Per-sample normalised contributions used by all aggregations."""
    mean = members.mean(axis=-1)
    err = (mean - obs) / norm
    out = {
        "abs": np.abs(err),
        "sq": err * err,
        "err": err,
        "crps": crps_ensemble(members, obs) / norm,
    }
    if members.shape[-1] >= 2:
        lo, hi = interval_bounds(members, alpha)
        out["cover"] = ((lo <= obs) & (obs <= hi)).astype(float)
        out["width"] = hi - lo
        out["nwidth"] = (hi - lo) / norm
    return out


# --------------------------------------------------------------------------
# sample-level API
# --------------------------------------------------------------------------


def crps(sample: EnsembleSample) -> float:
    """Normalised CRPS of one ensemble sample."""
    x = np.array(sample.members)[None]
    return float(crps_ensemble(x, np.array([sample.observation]))[0] / sample.normalizer)


def deterministic_scores(samples) -> tuple[float, float, float]:
    """(nMAE, nRMSE, nMBE) of the ensemble means."""
    members, obs, norm = _as_arrays(list(samples))
    err = (members.mean(axis=1) - obs) / norm
    return (
        math.fsum(np.abs(err)) / len(err),
        math.sqrt(math.fsum(err * err) / len(err)),
        math.fsum(err) / len(err),
    )


def interval_scores(samples, alpha: float = 0.1) -> tuple[float, float, float]:
    """(PICP, PINAW, MPIW) of the central ``1 - alpha`` interval."""
    members, obs, norm = _as_arrays(list(samples))
    lo, hi = interval_bounds(members, alpha)
    n = len(obs)
    cover = (lo <= obs) & (obs <= hi)
    width = hi - lo
    return (
        float(cover.sum()) / n,
        math.fsum(width / norm) / n,
        math.fsum(width) / n,
    )


@dataclass(frozen=True)
class RankHistogram:
    counts: np.ndarray
    chi2: float
    p_value: float

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def rank_histogram(samples, n_members: int | None = None, seed: int = 0) -> RankHistogram:
    """Rank of the observation among the members, ties split at random.

    ``samples`` is a sequence of :class:`EnsembleSample` or a
    ``(members, obs)`` pair of arrays.
    """
    if isinstance(samples, tuple) and len(samples) == 2 and not isinstance(samples[0], EnsembleSample):
        members = np.asarray(samples[0], dtype=float)
        obs = np.asarray(samples[1], dtype=float)
    else:
        members, obs, _ = _as_arrays(list(samples))
    e = members.shape[1]
    if n_members is not None and n_members != e:
        raise MixedEnsembleError(f"expected {n_members} members, samples have {e}")
    below = (members < obs[:, None]).sum(axis=1)
    ties = (members == obs[:, None]).sum(axis=1)
    rng = generator(seed, RANK_TIES)
    rank = below + np.floor(rng.random(len(obs)) * (ties + 1)).astype(int)
    counts = np.bincount(rank, minlength=e + 1)
    chi2, p = stats.chisquare(counts)
    return RankHistogram(counts, float(chi2), float(p))


# --------------------------------------------------------------------------
# regimes and strata
# --------------------------------------------------------------------------

REGIME_NAMES = ("cloudy", "sunny", "lowvar", "highvar")


@dataclass(frozen=True)
class RegimeLabels:
    dates: tuple
    daily_mean: np.ndarray
    daily_std: np.ndarray
    mean_thresholds: tuple
    std_thresholds: tuple

    def flags(self, day) -> dict:
        i = self.dates.index(day)
        m, s = self.daily_mean[i], self.daily_std[i]
        return {
            "cloudy": bool(m < self.mean_thresholds[0]),
            "sunny": bool(m > self.mean_thresholds[1]),
            "lowvar": bool(s < self.std_thresholds[0]),
            "highvar": bool(s > self.std_thresholds[1]),
        }

    def regimes_of(self, day) -> list:
        """Regime names that apply to ``day``, always including ``"all"``."""
        return ["all"] + [k for k, v in self.flags(day).items() if v]

    def days(self, regime: str) -> list:
        return [d for d in self.dates if regime == "all" or self.flags(d)[regime]]


def classify_regimes(daily_fields: dict) -> RegimeLabels:
    """Label days from the CSI fields used as nowcast input.

    ``daily_fields`` maps a date to an iterable of CSI arrays or GridFields.
    Thresholds are the 25th/75th percentiles (linear rule) of the daily mean
    and of the daily standard deviation; comparisons are strict.
    """
    if len(daily_fields) < 8:
        raise InsufficientDataError(f"regime classification needs >= 8 days, got {len(daily_fields)}")
    dates = tuple(sorted(daily_fields))
    means, stds = [], []
    for d in dates:
        vals = np.concatenate(
            [np.asarray(getattr(f, "values", f), dtype=float).ravel() for f in daily_fields[d]]
        )
        vals = vals[np.isfinite(vals)]
        means.append(vals.mean())
        stds.append(vals.std())
    means = np.array(means)
    stds = np.array(stds)
    mq = tuple(float(q) for q in np.percentile(means, [25, 75]))
    sq = tuple(float(q) for q in np.percentile(stds, [25, 75]))
    return RegimeLabels(dates, means, stds, mq, sq)


def season(d) -> str:
    m = d.month
    return {12: "DJF", 1: "DJF", 2: "DJF", 3: "MAM", 4: "MAM", 5: "MAM",
            6: "JJA", 7: "JJA", 8: "JJA"}.get(m, "SON")


def time_of_day(t: datetime, sunrise: datetime, sunset: datetime) -> str:
    """``morning``/``midday``/``afternoon`` by thirds of the daylight window."""
    frac = (t - sunrise).total_seconds() / max((sunset - sunrise).total_seconds(), 1.0)
    if frac < 1.0 / 3.0:
        return "morning"
    if frac < 2.0 / 3.0:
        return "midday"
    return "afternoon"


def elevation_band(elevation, threshold: float = 790.0) -> str:
    return "low" if elevation < threshold else "high"


# --------------------------------------------------------------------------
# stratified accumulation
# --------------------------------------------------------------------------


class _Kahan:
    __slots__ = ("s", "c")

    def __init__(self, n):
        self.s = np.zeros(n)
        self.c = np.zeros(n)

    def add(self, x):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


_SUMS = ("abs", "sq", "err", "crps", "cover", "width", "nwidth")


class ScoreAccumulator:
    """Streaming per-unit sums for (model, lead, stratum) cells.

    A unit is a station or a pixel.  Metrics are computed per unit and then
    averaged over units without weighting; ``n`` reports the sample count.
    """

    def __init__(self, n_units: int, normalizer=1.0, alpha: float = 0.1):
        self.n_units = n_units
        self.normalizer = np.broadcast_to(np.asarray(normalizer, dtype=float), (n_units,)).copy()
        self.alpha = alpha
        self._cells: dict = {}

    def add(self, key, members, obs):
        """``members`` is (E, n_units), ``obs`` is (n_units,); NaNs are skipped."""
        members = np.asarray(members, dtype=float).reshape(-1, self.n_units)
        obs = np.asarray(obs, dtype=float).reshape(self.n_units)
        ok = np.isfinite(obs) & np.all(np.isfinite(members), axis=0)
        if not ok.any():
            return
        cell = self._cells.get(key)
        if cell is None:
            cell = {k: _Kahan(self.n_units) for k in _SUMS}
            cell["n"] = np.zeros(self.n_units, dtype=np.int64)
            cell["E"] = members.shape[0]
            self._cells[key] = cell
        elif cell["E"] != members.shape[0]:
            raise MixedEnsembleError(f"cell {key} mixes ensemble sizes")
        x = members.T[ok]
        scores = _sample_scores(x, obs[ok], self.normalizer[ok], self.alpha)
        for k, v in scores.items():
            full = np.zeros(self.n_units)
            full[ok] = v
            cell[k].add(full)
        cell["n"] += ok

    def table(self) -> "ScoreTable":
        rows = []
        for key, cell in sorted(self._cells.items(), key=lambda kv: (str(kv[0][0]), int(kv[0][1]), str(kv[0][2]))):
            model, lead_min, stratum = key
            n = cell["n"]
            has = n > 0
            cnt = n[has].astype(float)
            per = lambda k: cell[k].s[has] / cnt  # noqa: E731
            values = {
                "nmae": per("abs").mean(),
                "nrmse": np.sqrt(per("sq")).mean(),
                "nmbe": per("err").mean(),
                "ncrps": per("crps").mean(),
            }
            if cell["E"] >= 2:
                values["picp"] = per("cover").mean()
                values["pinaw"] = per("nwidth").mean()
                values["mpiw"] = per("width").mean()
            rows.append(
                {
                    "model": model,
                    "lead_min": int(lead_min),
                    "stratum": stratum,
                    "values": {k: float(v) for k, v in values.items()},
                    "n": int(n.sum()),
                }
            )
        return ScoreTable(rows)


@dataclass
class ScoreTable:
    rows: list = dc_field(default_factory=list)

    def get(self, model, lead_min, stratum="all", metric=None):
        for r in self.rows:
            if r["model"] == model and r["lead_min"] == lead_min and r["stratum"] == stratum:
                return r["values"].get(metric) if metric else r
        raise KeyError((model, lead_min, stratum))

    def series(self, model, metric, stratum="all"):
        """(lead_min, value) pairs sorted by lead."""
        pts = [
            (r["lead_min"], r["values"][metric])
            for r in self.rows
            if r["model"] == model and r["stratum"] == stratum and metric in r["values"]
        ]
        return sorted(pts)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "lead_min", "stratum", "metric", "value", "n"])
            for r in self.rows:
                for m in METRICS:
                    if m in r["values"]:
                        w.writerow([r["model"], r["lead_min"], r["stratum"], m, repr(r["values"][m]), r["n"]])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.rows, fh, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path) -> "ScoreTable":
        cells = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                key = (row["model"], int(row["lead_min"]), row["stratum"])
                cell = cells.setdefault(key, {"model": key[0], "lead_min": key[1], "stratum": key[2], "values": {}, "n": int(row["n"])})
                cell["values"][row["metric"]] = float(row["value"])
        return cls(list(cells.values()))


# --------------------------------------------------------------------------
# national aggregation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DailyErrors:
    errors: dict
    excluded: dict

    def fraction_below(self, threshold: float) -> float:
        if not self.errors:
            return float("nan")
        return sum(e < threshold for e in self.errors.values()) / len(self.errors)

    def summary(self) -> dict:
        vals = np.array(list(self.errors.values()), dtype=float)
        return {
            "n_days": len(vals),
            "n_excluded": len(self.excluded),
            "mean": float(vals.mean()) if len(vals) else float("nan"),
            "median": float(np.median(vals)) if len(vals) else float("nan"),
            "frac_below_1pct": self.fraction_below(0.01),
            "frac_below_10pct": self.fraction_below(0.10),
        }


def daily_relative_error(predicted: dict, measured: dict) -> DailyErrors:
    """``|sum_pred - sum_meas| / sum_meas`` per day.

    Both arguments map a date to a daily total (or an iterable of interval
    totals, which is summed).  Days with a non-positive measured total or
    without a prediction are excluded with a reason.
    """
    errors, excluded = {}, {}
    for d in sorted(measured):
        meas = measured[d]
        meas = math.fsum(meas) if np.ndim(meas) else float(meas)
        if d not in predicted:
            excluded[d] = "no prediction"
            continue
        pred = predicted[d]
        pred = math.fsum(pred) if np.ndim(pred) else float(pred)
        if not meas > 0:
            excluded[d] = "measured total is zero"
            continue
        errors[d] = abs(pred - meas) / meas
    return DailyErrors(errors, excluded)


def seasonal_summary(errors: DailyErrors) -> dict:
    out = {}
    for name in ("MAM", "JJA", "SON", "DJF"):
        sub = {d: e for d, e in errors.errors.items() if season(d) == name}
        if sub:
            out[name] = DailyErrors(sub, {}).summary()
    out["all"] = errors.summary()
    return out
