from datetime import timedelta

import numpy as np
import pytest

from conftest import T0, make_field, textured
from test_flow import translated_sequence
from pvnowcast import clearsky, verify
from pvnowcast.errors import InsufficientDataError
from pvnowcast.flow import FlowField, PerturbationParams, advect_array, estimate_flow, perturb_flow
from pvnowcast.grid import FieldSequence, Kind
from pvnowcast.nowcast import (
    ForecastSet,
    NowcastConfig,
    fit_solarsteps,
    forecast_filename,
    persistence_forecast,
    read_forecast_set,
    solarsteps_forecast,
    solarsteps_pa_forecast,
    to_ssi,
    write_forecast_set,
)


def static_sequence(shape=(64, 64), seed=0, n=4):
    vals = 0.2 + textured(shape, seed)
    return FieldSequence(
        tuple(make_field(vals, Kind.CSI, T0 + timedelta(minutes=15 * k)) for k in range(n)), 900
    )


def test_config_validation():
    with pytest.raises(ValueError):
        NowcastConfig(ar_order=1)
    with pytest.raises(ValueError):
        NowcastConfig(n_members=0)
    assert NowcastConfig(csi_clip=[0, 1.2]).csi_clip == (0.0, 1.2)


def test_timing_convention():
    seq = static_sequence((8, 8))
    fs = persistence_forecast(seq, 8)
    assert fs.issue_time == seq.last.timestamp + timedelta(minutes=15)
    assert fs.valid_time(1) == fs.issue_time
    assert fs.valid_time(8) == seq.last.timestamp + timedelta(minutes=120)
    assert fs.lead_minutes(1) == 15 and fs.lead_minutes(8) == 120
    assert fs.members[2][0].timestamp == fs.valid_time(3)


def test_persistence():
    seq = translated_sequence(1, 0, shape=(16, 16))
    fs = persistence_forecast(seq, 8)
    assert fs.n_leads == 8 and fs.n_members == 1
    assert np.array_equal(fs.members[2][0].values, seq.last.values)
    nxt = translated_sequence(1, 0, n=5, shape=(16, 16))[4].values.astype(float)
    mae = np.mean(np.abs(seq.last.values - nxt))
    members = fs.ensemble(1).reshape(1, -1)
    assert verify.crps_ensemble(members.T, nxt.ravel()).mean() == pytest.approx(mae)
    with pytest.raises(InsufficientDataError):
        persistence_forecast([], 8)


def test_persistence_keeps_nans():
    vals = textured((8, 8))
    vals[0, 0] = np.nan
    seq = FieldSequence((make_field(vals),), 900)
    assert np.isnan(persistence_forecast(seq, 2).members[1][0].values[0, 0])


def test_solarsteps_static_input_without_noise():
    seq = static_sequence()
    fs = solarsteps_forecast(seq, NowcastConfig(noise=False, n_members=2))
    last = seq.last.values.astype(float)
    for lead in range(1, 9):
        out = fs.ensemble(lead)[0]
        ok = np.isfinite(out)
        assert ok.all()
        # the degenerate AR rule damps anomalies by 0.999 per step
        assert np.max(np.abs(out - last)) < 1e-2


def test_solarsteps_matches_advection_on_translation():
    seq = translated_sequence(1, 0, shape=(64, 64), seed=2)
    flow = FlowField.uniform(seq.geometry, 1.0, 0.0)
    fs = solarsteps_forecast(seq, NowcastConfig(noise=False, n_members=1), flow=flow)
    last = seq.last.values.astype(float)
    for lead in (1, 4, 8):
        ref = advect_array(last, flow, lead)
        out = fs.ensemble(lead)[0]
        ok = np.isfinite(ref) & np.isfinite(out)
        assert np.array_equal(np.isnan(out), np.isnan(ref))
        assert np.median(np.abs(out[ok] - ref[ok])) < 0.01


def test_solarsteps_members_differ_and_clip():
    seq = translated_sequence(2, 1, shape=(64, 64), seed=4)
    fs = solarsteps_forecast(seq, NowcastConfig(n_members=3))
    assert fs.n_leads == 8 and fs.n_members == 3
    for lead in range(1, 9):
        ens = fs.ensemble(lead)
        for a in range(3):
            for b in range(a + 1, 3):
                ok = np.isfinite(ens[a]) & np.isfinite(ens[b])
                assert np.linalg.norm(ens[a][ok] - ens[b][ok]) > 0
        fin = ens[np.isfinite(ens)]
        assert fin.min() >= 0.0 and fin.max() <= 1.4


def test_solarsteps_deterministic():
    seq = translated_sequence(2, -1, shape=(64, 64), seed=6)
    cfg = NowcastConfig(n_members=1, noise=False)
    a = solarsteps_forecast(seq, cfg)
    b = solarsteps_forecast(seq, cfg)
    for lead in range(1, 9):
        assert a.ensemble(lead).tobytes() == b.ensemble(lead).tobytes()
    cfg = NowcastConfig(n_members=2, seed=5)
    a = solarsteps_forecast(seq, cfg)
    b = solarsteps_forecast(seq, cfg)
    assert a.ensemble(8).tobytes() == b.ensemble(8).tobytes()


def test_fit_solarsteps_state():
    seq = translated_sequence(1, 1, shape=(64, 64), seed=8)
    state = fit_solarsteps(seq, NowcastConfig())
    c = state.coefficients
    assert c.phi1.shape == (6,)
    assert np.all(np.abs(c.phi2) < 1) and np.all(c.phi1 + c.phi2 < 1) and np.all(c.phi2 - c.phi1 < 1)


def test_pa_zero_flow_and_control_member():
    seq = static_sequence((32, 32))
    fs = solarsteps_pa_forecast(seq, NowcastConfig(n_members=4), flow=FlowField.zeros(seq.geometry))
    for lead in range(1, 9):
        assert np.allclose(fs.ensemble(lead), seq.last.values[None])
    seq = translated_sequence(2, 1, shape=(48, 48))
    flow = estimate_flow(seq)
    fs = solarsteps_pa_forecast(seq, NowcastConfig(n_members=4))
    for lead in (1, 5):
        ref = np.clip(advect_array(seq.last.values, flow, lead), 0, 1.4)
        assert np.array_equal(fs.ensemble(lead)[0], ref.astype(np.float32).astype(float), equal_nan=True)


def test_pa_spread_grows_with_lead():
    seq = translated_sequence(3, 0, shape=(64, 64), seed=1)
    fs = solarsteps_pa_forecast(seq, NowcastConfig(n_members=10), PerturbationParams(0.2, 10.0, 3))
    widths = []
    for lead in range(1, 9):
        ens = fs.ensemble(lead).reshape(10, -1)
        ok = np.all(np.isfinite(ens), axis=0)
        lo, hi = verify.interval_bounds(ens[:, ok].T, 0.1)
        widths.append(float(np.mean(hi - lo)))
    assert all(b >= a for a, b in zip(widths, widths[1:]))
    assert widths[-1] > widths[0]


def test_pa_ensemble_mean_bias():
    seq = translated_sequence(2, 0, shape=(64, 64), seed=12)
    flow = FlowField.uniform(seq.geometry, 2.0, 0.0)
    fs = solarsteps_pa_forecast(seq, NowcastConfig(n_members=256, n_leads=2), PerturbationParams(0.1, 5.0, 1), flow)
    ens = fs.ensemble(2)
    ref = advect_array(seq.last.values, flow, 2)
    ok = np.isfinite(ref) & np.all(np.isfinite(ens), axis=0)
    mean = ens[:, ok].mean(axis=0)
    assert abs(np.mean(mean - ref[ok])) <= 0.02


def test_forecast_set_io(tmp_path):
    seq = translated_sequence(1, 0, shape=(64, 64))
    fs = solarsteps_forecast(seq, NowcastConfig(n_members=2, n_leads=3))
    write_forecast_set(tmp_path / "fc", fs, {"seed": 0})
    names = sorted(p.name for p in (tmp_path / "fc").glob("*.sgf"))
    assert names == sorted(forecast_filename(l, e) for l in range(1, 4) for e in range(2))
    back = read_forecast_set(tmp_path / "fc")
    assert back.issue_time == fs.issue_time and back.model == "solarsteps"
    for lead in range(1, 4):
        assert back.ensemble(lead).tobytes() == fs.ensemble(lead).tobytes()


def test_to_ssi_uses_valid_time_clearsky():
    seq = static_sequence((16, 16))
    fs = persistence_forecast(seq, 3)
    ssi = to_ssi(fs)
    assert ssi.kind == Kind.SSI
    cs3 = clearsky.clearsky_field(seq.geometry, fs.valid_time(3))
    expected = clearsky.csi_to_ssi(fs.members[2][0], cs3).values
    assert np.array_equal(ssi.members[2][0].values, expected)
    assert to_ssi(ssi) is ssi
