"""
Ensemble nowcasts of clear-sky index fields.

Three models share one output type, :class:`ForecastSet`:

* :func:`solarsteps_forecast` -- optical-flow advection combined with
  per-scale AR(2) evolution and spatially correlated noise,
* :func:`solarsteps_pa_forecast` -- pure advection with perturbed motion,
* :func:`persistence_forecast` -- the latest observation repeated.

Timing convention: with inputs ending at ``t_last`` and step ``dt``, the
issue time is ``t_last + dt`` and lead ``l`` (1-based) is valid at
``t_last + l * dt``, i.e. lead 1 is the 15-minute forecast.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field as dc_field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import cascade as cs
from . import clearsky
from .errors import InsufficientDataError
from .flow import FlowField, PerturbationParams, advect_array, estimate_flow, perturb_flow
from .grid import FieldSequence, GridField, GridGeometry, Kind, read_grid, utc, write_grid


@dataclass(frozen=True)
class NowcastConfig:
    n_levels: int = 6
    ar_order: int = 2
    n_members: int = 10
    n_leads: int = 8
    csi_clip: tuple = (0.0, 1.4)
    seed: int = 0
    noise: bool = True
    flow_half_width: int = 8
    flow_levels: int = 3

    def __post_init__(self):
        if self.ar_order != 2:
            raise ValueError("only AR(2) is supported")
        if self.n_members < 1 or self.n_leads < 1 or self.n_levels < 1:
            raise ValueError("n_members, n_leads and n_levels must be >= 1")
        object.__setattr__(self, "csi_clip", tuple(float(c) for c in self.csi_clip))


@dataclass(eq=False)
class ForecastSet:
    """Per-lead ensembles of fields plus issue-time metadata.

    ``members[l][e]`` is the field of member ``e`` at lead ``l + 1``.
    """

    issue_time: datetime
    step: int
    members: list
    model: str = "unknown"
    kind: Kind = Kind.CSI
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.issue_time = utc(self.issue_time)
        self.kind = Kind(self.kind)

    @property
    def n_leads(self) -> int:
        return len(self.members)

    @property
    def n_members(self) -> int:
        return len(self.members[0])

    @property
    def geometry(self) -> GridGeometry:
        return self.members[0][0].geometry

    def valid_time(self, lead: int) -> datetime:
        return self.issue_time + timedelta(seconds=(lead - 1) * self.step)

    def lead_minutes(self, lead: int) -> int:
        return lead * self.step // 60

    def ensemble(self, lead: int) -> np.ndarray:
        """Member values at ``lead`` (1-based) as an (E, ny, nx) float64 array."""
        return np.stack([f.values.astype(np.float64) for f in self.members[lead - 1]])


def _build_set(issue_time, step, arrays, geometry, model, kind=Kind.CSI, metadata=None):
    members = []
    for lead, per_member in enumerate(arrays, start=1):
        t = issue_time + timedelta(seconds=(lead - 1) * step)
        members.append([GridField(geometry, t, a.astype(np.float32), kind) for a in per_member])
    return ForecastSet(issue_time, step, members, model, kind, metadata or {})


def _check_input(seq, need=1):
    if len(seq) < need:
        raise InsufficientDataError(f"need at least {need} input fields, got {len(seq)}")
    seq = seq if isinstance(seq, FieldSequence) else FieldSequence(tuple(seq), 900)
    return seq


def _issue_time(seq):
    return seq.last.timestamp + timedelta(seconds=seq.step)


def persistence_forecast(seq, n_leads: int = 8) -> ForecastSet:
    """Single-member forecast repeating the latest field at every lead."""
    seq = _check_input(seq, 1)
    last = seq.last
    arrays = [[last.values] for _ in range(n_leads)]
    return _build_set(_issue_time(seq), seq.step, arrays, last.geometry, "persistence", last.kind)


def _clip(a, clip):
    return np.clip(a, clip[0], clip[1])


def solarsteps_pa_forecast(
    seq,
    config: NowcastConfig = NowcastConfig(),
    perturbation: PerturbationParams | None = None,
    flow: FlowField | None = None,
) -> ForecastSet:
    """Pure-advection ensemble: member ``e`` follows ``perturb_flow(flow, params, e)``."""
    seq = _check_input(seq, 2)
    params = perturbation or PerturbationParams(seed=config.seed)
    if flow is None:
        flow = estimate_flow(seq, config.flow_half_width, config.flow_levels)
    last = seq.last.values.astype(np.float64)
    flows = [perturb_flow(flow, params, e) for e in range(config.n_members)]
    arrays = [
        [_clip(advect_array(last, f, lead), config.csi_clip) for f in flows]
        for lead in range(1, config.n_leads + 1)
    ]
    meta = {"perturbation": asdict(params), "config": asdict(config)}
    return _build_set(_issue_time(seq), seq.step, arrays, seq.geometry, "solarsteps-pa", Kind.CSI, meta)


@dataclass(frozen=True, eq=False)
class SolarStepsState:
    """Everything the ensemble loop needs after fitting."""

    flow: FlowField
    last: cs.Cascade
    previous_levels: np.ndarray
    coefficients: cs.ArCoefficients
    mask: np.ndarray
    template: np.ndarray


def fit_solarsteps(seq, config: NowcastConfig = NowcastConfig(), flow: FlowField | None = None) -> SolarStepsState:
    """Estimate motion, build the Lagrangian level history and fit AR(2)."""
    seq = _check_input(seq, 3)
    if flow is None:
        flow = estimate_flow(seq, config.flow_half_width, config.flow_levels)
    stack = seq.stack()
    n = len(stack)
    # bring every input to the frame of the latest field
    lagr = [
        advect_array(stack[i], flow, n - 1 - i) if i < n - 1 else stack[i] for i in range(n)
    ]
    valid = np.all([np.isfinite(a) for a in lagr], axis=0)
    cascades = [cs.decompose(cs.fill_nan(a), config.n_levels) for a in lagr]
    history = np.stack([c.levels for c in cascades])
    coeffs = cs.fit_ar2(history, valid if valid.any() else None)
    return SolarStepsState(
        flow=flow,
        last=cascades[-1],
        previous_levels=cascades[-2].levels,
        coefficients=coeffs,
        mask=np.isfinite(stack[-1]),
        template=cs.fill_nan(stack[-1]),
    )


def _member_run(state: SolarStepsState, config: NowcastConfig, member: int):
    x_prev = state.previous_levels
    x_curr = state.last.levels
    out = []
    for lead in range(1, config.n_leads + 1):
        eps = None
        if config.noise:
            noise = cs.correlated_noise(state.template, config.seed, member, lead)
            eps = cs.decompose(noise, config.n_levels).levels
        x_next = cs.ar2_step(x_prev, x_curr, state.coefficients, eps)
        x_prev, x_curr = x_curr, x_next
        field = cs.recompose(state.last, x_next)
        field = np.where(state.mask, field, np.nan)
        field = advect_array(field, state.flow, lead)
        out.append(_clip(field, config.csi_clip))
    return out


def solarsteps_forecast(seq, config: NowcastConfig = NowcastConfig(), flow: FlowField | None = None) -> ForecastSet:
    """Stochastic cascade nowcast from (typically four) CSI fields."""
    seq = _check_input(seq, 3)
    state = fit_solarsteps(seq, config, flow)
    runs = [_member_run(state, config, e) for e in range(config.n_members)]
    arrays = [[runs[e][lead] for e in range(config.n_members)] for lead in range(config.n_leads)]
    meta = {
        "config": asdict(config),
        "phi1": state.coefficients.phi1.tolist(),
        "phi2": state.coefficients.phi2.tolist(),
    }
    return _build_set(_issue_time(seq), seq.step, arrays, seq.geometry, "solarsteps", Kind.CSI, meta)


def to_ssi(fset: ForecastSet, params: clearsky.ClearSkyParams | None = None) -> ForecastSet:
    """Convert a CSI forecast to SSI with the clear-sky field at each valid time."""
    if fset.kind == Kind.SSI:
        return fset
    if fset.kind != Kind.CSI:
        raise ValueError(f"cannot convert {fset.kind.name} forecasts to SSI")
    members = []
    for lead, per_member in enumerate(fset.members, start=1):
        cs_field = clearsky.clearsky_field(fset.geometry, fset.valid_time(lead), params)
        members.append([clearsky.csi_to_ssi(f, cs_field) for f in per_member])
    return ForecastSet(fset.issue_time, fset.step, members, fset.model, Kind.SSI, dict(fset.metadata))


# --------------------------------------------------------------------------
# persistence on disk
# --------------------------------------------------------------------------

MANIFEST = "manifest.json"


def forecast_filename(lead: int, member: int) -> str:
    return f"lead{lead}_member{member}.sgf"


def write_forecast_set(directory, fset: ForecastSet, extra: dict | None = None) -> Path:
    """Write ``lead{L}_member{E}.sgf`` files and a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for lead, per_member in enumerate(fset.members, start=1):
        for e, f in enumerate(per_member):
            write_grid(directory / forecast_filename(lead, e), f)
    manifest = {
        "model": fset.model,
        "issue_time": fset.issue_time.isoformat(),
        "step": fset.step,
        "n_leads": fset.n_leads,
        "n_members": fset.n_members,
        "kind": int(fset.kind),
        "metadata": fset.metadata,
    }
    if extra:
        manifest.update(extra)
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return directory


def read_forecast_set(directory) -> ForecastSet:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    members = [
        [read_grid(directory / forecast_filename(lead, e)) for e in range(manifest["n_members"])]
        for lead in range(1, manifest["n_leads"] + 1)
    ]
    return ForecastSet(
        utc(manifest["issue_time"]),
        int(manifest["step"]),
        members,
        manifest["model"],
        Kind(manifest["kind"]),
        manifest.get("metadata", {}),
    )
