"""
End-to-end workflow: nowcast runs, power-model training, prediction,
evaluation and national aggregation over a directory-based dataset.

Dataset layout (as written by :func:`pvnowcast.synth.generate_dataset`)::

    grids/csi_YYYYmmddTHHMMSS.sgf     clear-sky index fields
    grids/ssi_YYYYmmddTHHMMSS.sgf     irradiance fields
    stations.csv                      id,lon,lat,elevation_m
    series/<id>.csv                   timestamp_utc,power_kw

Outputs go below ``output_dir``::

    forecasts/<model>/<YYYYmmddTHHMM>/lead{L}_member{E}.sgf + manifest.json
    power_models/<id>.json, training_report.csv, rejected.csv
    predictions/<model>.csv
    scores/ssi_scores.{csv,json}, power_scores.{csv,json}, rank_<target>_<model>.csv
    report/national_<model>.json, daily_errors_<model>.csv
"""

from __future__ import annotations

import csv
import json
import logging
import os
import re
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, fields as dc_fields
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import clearsky, verify
from .errors import InsufficientDataError, PolarConditionError, TrainingError
from .flow import PerturbationParams
from .gbrt import BoosterParams
from .grid import (
    EVALUATION_CELL_SIZE,
    FieldSequence,
    GridField,
    Kind,
    downsample,
    hourly_average,
    interpolate_points,
    read_grid,
    utc,
)
from .nowcast import (
    ForecastSet,
    NowcastConfig,
    persistence_forecast,
    read_forecast_set,
    solarsteps_forecast,
    solarsteps_pa_forecast,
    to_ssi,
    write_forecast_set,
)
from .power import (
    SplitPlan,
    Station,
    StationModel,
    clean_fleet,
    evaluate_station_model,
    feature_matrix,
    format_time,
    load_fleet,
    sun_up,
    train_station_model,
)

log = logging.getLogger("pvnowcast")

OUTPUT_ENV = "PVNOWCAST_OUTPUT"
MODELS = ("persistence", "solarsteps", "solarsteps-pa", "observed", "external")
_GRID_RE = re.compile(r"^(csi|ssi)_(\d{8}T\d{6})\.sgf$")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    grids_dir: str | None = None
    stations: str | None = None
    series_dir: str | None = None
    output_dir: str = "pvnowcast-out"
    external_dir: str | None = None
    model: str = "solarsteps"
    nowcast: NowcastConfig = dc_field(default_factory=NowcastConfig)
    perturbation: PerturbationParams = dc_field(default_factory=PerturbationParams)
    booster: BoosterParams = dc_field(default_factory=BoosterParams)
    alpha: float = 0.1
    seed: int = 0
    workers: int | None = None
    clean_split: str = "year"
    search: bool = False
    interpolation: str = "bilinear"
    elevation_threshold: float | None = 790.0  # None: fleet median
    evaluation_cell_size: float = EVALUATION_CELL_SIZE
    issue_times: list | None = None

    _NESTED = {"nowcast": NowcastConfig, "perturbation": PerturbationParams, "booster": BoosterParams}
    _INPUTS = ("grids_dir", "stations", "series_dir", "external_dir")

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        env = os.environ.get(OUTPUT_ENV)
        if env:
            self.output_dir = env

    def to_dict(self) -> dict:
        d = {}
        for f in dc_fields(self):
            v = getattr(self, f.name)
            d[f.name] = asdict(v) if f.name in self._NESTED else v
        d["nowcast"]["csi_clip"] = list(d["nowcast"]["csi_clip"])
        return d

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        d = dict(d)
        for name, typ in cls._NESTED.items():
            if name in d and isinstance(d[name], dict):
                d[name] = typ(**d[name])
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path, check_paths: bool = True) -> "RunConfig":
        cfg = cls.from_dict(json.loads(Path(path).read_text()))
        if check_paths:
            cfg.check_paths()
        return cfg

    def check_paths(self):
        for name in self._INPUTS:
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{name}: {p} does not exist")

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# grid index
# --------------------------------------------------------------------------


class GridIndex:
    """Lookup of gridded observation files by kind and timestamp."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.paths = {"csi": {}, "ssi": {}}
        for name in sorted(os.listdir(self.directory)):
            m = _GRID_RE.match(name)
            if m:
                s = m.group(2)
                t = datetime(
                    int(s[:4]), int(s[4:6]), int(s[6:8]), int(s[9:11]), int(s[11:13]), int(s[13:15]),
                    tzinfo=timezone.utc,
                )
                self.paths[m.group(1)][t] = self.directory / name

    def times(self, kind="csi") -> list:
        return sorted(self.paths[kind] or self.paths["ssi" if kind == "csi" else "csi"])

    def days(self) -> list:
        return sorted({t.date() for t in self.times()})

    def geometry(self):
        t = self.times()[0]
        return self.load("csi", t).geometry

    def has(self, kind, t) -> bool:
        return t in self.paths[kind] or t in self.paths["ssi" if kind == "csi" else "csi"]

    def load(self, kind, t) -> GridField:
        """Field of ``kind`` at ``t``, converting from the other kind if needed."""
        if t in self.paths[kind]:
            return read_grid(self.paths[kind][t])
        other = "ssi" if kind == "csi" else "csi"
        if t not in self.paths[other]:
            raise KeyError(f"no {kind} field at {t.isoformat()}")
        f = read_grid(self.paths[other][t])
        cs_field = clearsky.clearsky_field(f.geometry, t)
        return clearsky.ssi_to_csi(f, cs_field) if kind == "csi" else clearsky.csi_to_ssi(f, cs_field)


# --------------------------------------------------------------------------
# nowcasting
# --------------------------------------------------------------------------


def issue_times_for_day(geometry, day: date) -> list:
    """Full hours between sunrise + 1 h and sunset - 3 h at the domain center."""
    lon, lat = geometry.center
    try:
        rise, sset = clearsky.daylight_window(lat, lon, day)
    except PolarConditionError:
        return []
    first = rise + timedelta(hours=1)
    last = sset - timedelta(hours=3)
    t = first.replace(minute=0, second=0)
    if t < first:
        t += timedelta(hours=1)
    out = []
    while t <= last:
        out.append(t)
        t += timedelta(hours=1)
    return out


def in_daylight_window(geometry, t: datetime) -> bool:
    t = utc(t)
    return t.minute == 0 and t.second == 0 and t in issue_times_for_day(geometry, t.date())


def _forecast_dir(cfg: RunConfig, model: str, t: datetime) -> Path:
    return cfg.out / "forecasts" / model / t.strftime("%Y%m%dT%H%M")


def _nowcast_one(job):
    cfg, index, t = job
    t = utc(t)
    step = 900
    nc = cfg.nowcast
    inputs = [t - timedelta(seconds=step * k) for k in range(4, 0, -1)]
    missing = [x for x in inputs if not index.has("csi", x)]
    if missing:
        return t, f"missing input field {missing[0].isoformat()}"
    seq = FieldSequence(tuple(index.load("csi", x) for x in inputs), step)
    try:
        if cfg.model == "persistence":
            fset = persistence_forecast(seq, nc.n_leads)
        elif cfg.model == "solarsteps":
            fset = solarsteps_forecast(seq, nc)
        elif cfg.model == "solarsteps-pa":
            fset = solarsteps_pa_forecast(seq, nc, cfg.perturbation)
        elif cfg.model == "observed":
            future = [t + timedelta(seconds=step * k) for k in range(nc.n_leads)]
            gaps = [x for x in future if not index.has("csi", x)]
            if gaps:
                return t, f"missing observation {gaps[0].isoformat()}"
            obs = [index.load("csi", x) for x in future]
            fset = ForecastSet(t, step, [[f] * nc.n_members for f in obs], "observed", Kind.CSI)
        else:
            raise ValueError(f"model {cfg.model!r} cannot be run by nowcast")
    except (InsufficientDataError, ValueError) as exc:
        return t, f"model error: {exc}"
    extra = {"seed": nc.seed, "inputs": [x.isoformat() for x in inputs]}
    write_forecast_set(_forecast_dir(cfg, cfg.model, t), fset, extra)
    return t, None


def run_nowcast(cfg: RunConfig, issue_times=None) -> dict:
    """Run ``cfg.model`` for every issue time; returns written/skipped lists."""
    index = GridIndex(cfg.grids_dir)
    geom = index.geometry()
    requested = issue_times if issue_times is not None else cfg.issue_times
    skipped = {}
    if requested is None:
        times = [t for d in index.days() for t in issue_times_for_day(geom, d)]
    else:
        times = []
        for t in map(utc, requested):
            if in_daylight_window(geom, t):
                times.append(t)
            else:
                skipped[t] = "outside the sunrise+1h / sunset-3h window"
    results = _map(_nowcast_one, [(cfg, index, t) for t in times], cfg.n_workers())
    written = []
    for t, reason in results:
        if reason:
            skipped[t] = reason
        else:
            written.append(t)
    for t, reason in sorted(skipped.items()):
        log.info("skip %s: %s", t.isoformat(), reason)
    log.info("nowcast %s: %d written, %d skipped", cfg.model, len(written), len(skipped))
    return {"written": sorted(written), "skipped": dict(sorted(skipped.items()))}


def load_forecasts(directory) -> list:
    directory = Path(directory)
    if not directory.exists():
        return []
    return [read_forecast_set(p.parent) for p in sorted(directory.glob("*/manifest.json"))]


# --------------------------------------------------------------------------
# power models
# --------------------------------------------------------------------------


def station_ssi(index: GridIndex, stations, method="bilinear") -> dict:
    """Map each grid time to SSI interpolated at every station."""
    lons = np.array([s.lon for s in stations])
    lats = np.array([s.lat for s in stations])
    return {t: interpolate_points(index.load("ssi", t), lons, lats, method) for t in index.times("ssi")}


def _aligned_ssi(station_idx, station: Station, ssi_by_time) -> np.ndarray:
    lookup = {int(t.timestamp()): v[station_idx] for t, v in ssi_by_time.items()}
    return np.array([lookup.get(int(t), np.nan) for t in station.times])


def _train_one(job):
    station, ssi, params, search, seed = job
    plan = SplitPlan.for_times(station.times)
    try:
        model = train_station_model(station, ssi, plan, params, search=search, seed=seed)
    except TrainingError as exc:
        return station.id, None, str(exc)
    row = {"station_id": station.id, "p95": station.p95, **model.metadata}
    for split in ("val", "test"):
        try:
            sc = evaluate_station_model(model, station, ssi, plan, split)
        except InsufficientDataError:
            sc = {"nmae": np.nan, "nrmse": np.nan, "nmbe": np.nan, "n": 0}
        row.update({f"{split}_{k}": v for k, v in sc.items()})
    return station.id, model.to_dict(), row


REPORT_COLUMNS = (
    "station_id", "p95", "n_train", "n_val", "n_trees",
    "val_nrmse", "val_nmae", "val_nmbe", "val_n",
    "test_nrmse", "test_nmae", "test_nmbe", "test_n",
)


def train_power(cfg: RunConfig) -> dict:
    """Clean the fleet, train one model per admitted station, write report."""
    stations = load_fleet(cfg.stations, cfg.series_dir)
    if cfg.clean_split == "none":
        kept, rejected = stations, []
    else:
        kept, rejected = clean_fleet(stations, split=cfg.clean_split)
    rejected = [(s.id, r) for s, r in rejected]
    index = GridIndex(cfg.grids_dir)
    ssi_by_time = station_ssi(index, kept, cfg.interpolation) if kept else {}
    jobs = [
        (s, _aligned_ssi(i, s, ssi_by_time), cfg.booster, cfg.search, cfg.seed)
        for i, s in enumerate(kept)
    ]
    results = _map(_train_one, jobs, cfg.n_workers())

    model_dir = cfg.out / "power_models"
    model_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for sid, model, row in results:
        if model is None:
            rejected.append((sid, f"training_error: {row}"))
            continue
        (model_dir / f"{sid}.json").write_text(json.dumps(model, sort_keys=True))
        rows.append(row)
    with open(model_dir / "training_report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    with open(model_dir / "rejected.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "reason"])
        for sid, reason in rejected:
            w.writerow([sid, reason])
    test = [r["test_nrmse"] for r in rows if np.isfinite(r.get("test_nrmse", np.nan))]
    summary = {
        "admitted": len(rows),
        "rejected": len(rejected),
        "fleet_test_nrmse": float(np.mean(test)) if test else float("nan"),
    }
    log.info("train-power: %s", summary)
    return summary


def load_models(cfg: RunConfig) -> dict:
    d = cfg.out / "power_models"
    models = {}
    for p in sorted(d.glob("*.json")):
        m = StationModel.load(p)
        models[m.station_id] = m
    return models


def _forecast_station_ssi(fset: ForecastSet, lons, lats, method):
    """(n_leads, n_members, n_stations) SSI at station points."""
    ssi = to_ssi(fset)
    out = np.empty((ssi.n_leads, ssi.n_members, len(lons)))
    for lead in range(ssi.n_leads):
        for e, f in enumerate(ssi.members[lead]):
            out[lead, e] = interpolate_points(f, lons, lats, method)
    return out


PREDICTION_COLUMNS = ("issue_time", "lead", "valid_time", "station_id", "member", "power_kw")


def predict_fleet(cfg: RunConfig, model_name: str | None = None) -> Path:
    """Apply station models to every stored forecast of ``model_name``."""
    model_name = model_name or cfg.model
    models = load_models(cfg)
    stations = [s for s in load_fleet(cfg.stations, cfg.series_dir) if s.id in models]
    if not stations:
        raise InsufficientDataError("no trained station models found")
    lons = np.array([s.lon for s in stations])
    lats = np.array([s.lat for s in stations])
    fdir = Path(cfg.external_dir) if model_name == "external" else cfg.out / "forecasts" / model_name
    fsets = load_forecasts(fdir)
    if not fsets:
        raise InsufficientDataError(f"no forecasts found in {fdir}")

    ssi = np.stack([_forecast_station_ssi(f, lons, lats, cfg.interpolation) for f in fsets])
    n_issue, n_leads, n_members, _ = ssi.shape
    valid = np.array(
        [[int(f.valid_time(l + 1).timestamp()) for l in range(n_leads)] for f in fsets]
    )
    power = np.empty_like(ssi)
    for k, s in enumerate(stations):
        x_ssi = ssi[..., k].reshape(-1)
        x_t = np.repeat(valid.reshape(-1), n_members)
        X = feature_matrix(s.lat, s.lon, x_ssi, x_t)
        p = models[s.id].predict(X)
        p[~sun_up(s.lat, s.lon, x_t)] = 0.0
        power[..., k] = p.reshape(n_issue, n_leads, n_members)

    out = cfg.out / "predictions"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{model_name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTION_COLUMNS)
        for i, f in enumerate(fsets):
            it = format_time(f.issue_time.timestamp())
            for lead in range(n_leads):
                vt = format_time(valid[i, lead])
                for k, s in enumerate(stations):
                    for e in range(n_members):
                        v = power[i, lead, e, k]
                        w.writerow([it, lead + 1, vt, s.id, e, repr(float(v)) if np.isfinite(v) else ""])
    log.info("predict-power %s: %d forecasts x %d stations", model_name, n_issue, len(stations))
    return path


def read_predictions(path) -> dict:
    """{(issue_unix, lead): {station_id: members array}} plus valid times."""
    raw = defaultdict(lambda: defaultdict(dict))
    valid = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (int(utc(row["issue_time"]).timestamp()), int(row["lead"]))
            valid[key] = int(utc(row["valid_time"]).timestamp())
            v = row["power_kw"]
            raw[key][row["station_id"]][int(row["member"])] = float(v) if v else np.nan
    out = {}
    for key, per_station in raw.items():
        out[key] = {
            sid: np.array([m[e] for e in sorted(m)]) for sid, m in per_station.items()
        }
    return out, valid


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def _regime_labels(index: GridIndex, days_issue: dict):
    """Regimes from the CSI input windows of each day's issue times."""
    daily = {}
    for day, times in days_issue.items():
        fields = []
        for t in times:
            for k in range(4, 0, -1):
                x = t - timedelta(seconds=900 * k)
                if index.has("csi", x):
                    fields.append(index.load("csi", x).values)
        if fields:
            daily[day] = fields
    if len(daily) < 8:
        log.info("regime strata skipped: %d days (< 8)", len(daily))
        return None
    return verify.classify_regimes(daily)


def _strata(day_labels, day, tod):
    out = ["all"]
    if day_labels is not None and day in day_labels.dates:
        out += [r for r in day_labels.regimes_of(day) if r != "all"]
    out.append(tod)
    return out


def _coarsen_factor(geometry, target: float) -> int:
    """Block factor taking ``geometry`` to ``target`` cell size (1 if not possible)."""
    factor = int(round(target / geometry.cell_size))
    if factor < 2 or geometry.n_rows % factor or geometry.n_cols % factor:
        return 1
    return factor


def _at(field: GridField, geometry) -> GridField:
    """Block-average ``field`` onto the coarser ``geometry``."""
    if field.geometry == geometry:
        return field
    factor = int(round(geometry.cell_size / field.geometry.cell_size))
    return downsample(field, factor)


def _obs_for(index: GridIndex, fset: ForecastSet, lead: int, geometry):
    """Observed SSI matching a forecast lead (hourly mean for hourly forecasts)."""
    t = fset.valid_time(lead)
    if fset.step == 3600:
        window = [t - timedelta(seconds=900 * k) for k in range(3, -1, -1)]
        if not all(index.has("ssi", x) for x in window):
            return None
        obs = hourly_average([index.load("ssi", x) for x in window], t)
    else:
        if not index.has("ssi", t):
            return None
        obs = index.load("ssi", t)
    return _at(obs, geometry)


def evaluate(cfg: RunConfig) -> dict:
    """Grid SSI scores for every stored model (+ power scores if available).

    Forecasts and observations are block-averaged to
    ``cfg.evaluation_cell_size`` before scoring; SSI scores are in W m-2.
    """
    index = GridIndex(cfg.grids_dir)
    geom = index.geometry()
    lon_c, lat_c = geom.center
    model_dirs = {}
    fdir = cfg.out / "forecasts"
    if fdir.exists():
        model_dirs.update({p.name: p for p in sorted(fdir.iterdir()) if p.is_dir()})
    if cfg.external_dir:
        model_dirs["external"] = Path(cfg.external_dir)
    fsets = {m: load_forecasts(p) for m, p in model_dirs.items()}

    days_issue = defaultdict(set)
    for sets in fsets.values():
        for f in sets:
            if f.step == 900:
                days_issue[f.issue_time.date()].add(f.issue_time)
    labels = _regime_labels(index, days_issue)
    windows = {}

    def tod(t):
        d = t.date()
        if d not in windows:
            windows[d] = clearsky.daylight_window(lat_c, lon_c, d)
        return verify.time_of_day(t, *windows[d])

    out_dir = cfg.out / "scores"
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {}
    n_overlap = 0
    ssi_rows = []
    for model, sets in fsets.items():
        if not sets:
            continue
        fgeom = sets[0].geometry
        factor = _coarsen_factor(fgeom, cfg.evaluation_cell_size)
        egeom = fgeom.coarsen(factor) if factor > 1 else fgeom
        n_members = sets[0].n_members
        acc = verify.ScoreAccumulator(egeom.n_rows * egeom.n_cols, 1.0, cfg.alpha)
        ranks = np.zeros(n_members + 1, dtype=np.int64)
        for i, f in enumerate(sets):
            fs = to_ssi(f)
            for lead in range(1, f.n_leads + 1):
                obs = _obs_for(index, f, lead, egeom)
                if obs is None:
                    continue
                n_overlap += 1
                members = np.stack(
                    [_at(m, egeom).values.astype(np.float64).ravel() for m in fs.members[lead - 1]]
                )
                y = obs.values.astype(np.float64).ravel()
                t = f.valid_time(lead)
                for stratum in _strata(labels, f.issue_time.date(), tod(t)):
                    acc.add((model, f.lead_minutes(lead), stratum), members, y)
                ok = np.isfinite(y) & np.all(np.isfinite(members), axis=0)
                if n_members > 1 and ok.any():
                    rh = verify.rank_histogram((members[:, ok].T, y[ok]), seed=cfg.seed + i * 97 + lead)
                    ranks += rh.counts
        ssi_rows += acc.table().rows
        if n_members > 1 and ranks.sum() > 0:
            _write_ranks(out_dir / f"rank_ssi_{model}.csv", ranks)
    if n_overlap == 0:
        raise InsufficientDataError("no overlapping forecast/observation timestamps")
    tables["ssi"] = verify.ScoreTable(ssi_rows)
    tables["ssi"].to_csv(out_dir / "ssi_scores.csv")
    tables["ssi"].to_json(out_dir / "ssi_scores.json")

    pdir = cfg.out / "predictions"
    if cfg.stations and cfg.series_dir and pdir.exists() and any(pdir.glob("*.csv")):
        tables["power"] = _evaluate_power(cfg, labels, tod, out_dir)
    return tables


def _write_ranks(path, counts):
    stat = verify.stats.chisquare(counts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "count"])
        for r, c in enumerate(counts):
            w.writerow([r, int(c)])
        w.writerow(["chi2", repr(float(stat.statistic))])
        w.writerow(["p_value", repr(float(stat.pvalue))])


def _measurements(stations) -> dict:
    return {s.id: dict(zip(s.times.tolist(), s.power.tolist())) for s in stations}


def _evaluate_power(cfg, labels, tod, out_dir) -> verify.ScoreTable:
    models = load_models(cfg)
    stations = [s for s in load_fleet(cfg.stations, cfg.series_dir) if s.id in models]
    meas = _measurements(stations)
    p95 = np.array([models[s.id].p95 for s in stations])
    elev = np.array([s.elevation for s in stations])
    threshold = cfg.elevation_threshold
    if threshold is None:
        threshold = float(np.median(elev))
    band = np.array([verify.elevation_band(e, threshold) for e in elev])
    rows = []
    for path in sorted((cfg.out / "predictions").glob("*.csv")):
        model = path.stem
        preds, valid = read_predictions(path)
        if not preds:
            continue
        n_members = len(next(iter(next(iter(preds.values())).values())))
        acc = verify.ScoreAccumulator(len(stations), p95, cfg.alpha)
        all_members, all_obs = [], []
        for (issue, lead), per_station in sorted(preds.items()):
            t = valid[(issue, lead)]
            members = np.full((n_members, len(stations)), np.nan)
            y = np.full(len(stations), np.nan)
            for k, s in enumerate(stations):
                if s.id in per_station:
                    members[:, k] = per_station[s.id]
                y[k] = meas[s.id].get(t, np.nan)
            up = np.array([bool(sun_up(s.lat, s.lon, t)) for s in stations])
            y[~up] = np.nan
            vt = datetime.fromtimestamp(t, tz=timezone.utc)
            issue_day = datetime.fromtimestamp(issue, tz=timezone.utc).date()
            lead_min = lead * 15
            for stratum in _strata(labels, issue_day, tod(vt)):
                acc.add((model, lead_min, stratum), members, y)
            for b in ("low", "high"):
                acc.add((model, lead_min, f"elev_{b}"), members, np.where(band == b, y, np.nan))
            ok = np.isfinite(y) & np.all(np.isfinite(members), axis=0)
            all_members.append(members[:, ok].T)
            all_obs.append(y[ok])
        rows += acc.table().rows
        if n_members > 1:
            rh = verify.rank_histogram((np.concatenate(all_members), np.concatenate(all_obs)), seed=cfg.seed)
            _write_ranks(out_dir / f"rank_power_{model}.csv", rh.counts)
    table = verify.ScoreTable(rows)
    table.to_csv(out_dir / "power_scores.csv")
    table.to_json(out_dir / "power_scores.json")
    return table


# --------------------------------------------------------------------------
# national aggregation
# --------------------------------------------------------------------------


def aggregate(cfg: RunConfig, model_name: str | None = None) -> dict:
    """Daily fleet totals at the shortest lead and their relative errors."""
    model_name = model_name or cfg.model
    path = cfg.out / "predictions" / f"{model_name}.csv"
    preds, valid = read_predictions(path)
    stations = load_fleet(cfg.stations, cfg.series_dir)
    meas = _measurements(stations)
    min_lead = min(lead for _, lead in preds)
    pred_day = defaultdict(list)
    meas_day = defaultdict(list)
    for (issue, lead), per_station in sorted(preds.items()):
        if lead != min_lead:
            continue
        t = valid[(issue, lead)]
        p_tot, m_tot = [], []
        for sid, members in per_station.items():
            m = meas.get(sid, {}).get(t, np.nan)
            p = float(np.mean(members))
            if np.isfinite(m) and np.isfinite(p):
                p_tot.append(p)
                m_tot.append(m)
        day = datetime.fromtimestamp(t, tz=timezone.utc).date()
        pred_day[day].append(verify.math.fsum(p_tot))
        meas_day[day].append(verify.math.fsum(m_tot))
    errors = verify.daily_relative_error(dict(pred_day), dict(meas_day))
    report = {
        "model": model_name,
        "lead": int(min_lead),
        "seasons": verify.seasonal_summary(errors),
        "excluded": {d.isoformat(): r for d, r in errors.excluded.items()},
    }
    out = cfg.out / "report"
    out.mkdir(parents=True, exist_ok=True)
    (out / f"national_{model_name}.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    with open(out / f"daily_errors_{model_name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "season", "relative_error"])
        for d, e in sorted(errors.errors.items()):
            w.writerow([d.isoformat(), verify.season(d), repr(float(e))])
    return report
