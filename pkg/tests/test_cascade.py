import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from conftest import textured
from pvnowcast import cascade as cs
from pvnowcast.errors import TooSmallError


def _rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_round_trip_random_fields():
    rng = np.random.default_rng(0)
    for shape in ((64, 64), (96, 128), (128, 80)):
        x = rng.random(shape)
        c = cs.decompose(x, 6)
        assert _rel_l2(cs.recompose(c), x) <= 1e-5


@given(hnp.arrays(np.float64, (64, 64), elements=st.floats(0, 1.4)))
def test_round_trip_property(x):
    if np.linalg.norm(x) == 0:
        return
    c = cs.decompose(x, 6)
    assert np.linalg.norm(cs.recompose(c) - x) <= 1e-5 * max(np.linalg.norm(x), 1e-12)


def test_partition_of_unity_and_ordering():
    r = cs.radial_wavenumber((64, 96))
    centers = cs.center_wavenumbers((64, 96), 6)
    w = cs.filter_weights(r, centers)
    assert np.allclose(w.sum(axis=0), 1.0)
    assert np.all(np.diff(centers) > 0)  # level 0 is the largest scale
    assert centers[0] == pytest.approx(1.0)
    assert centers[-1] == pytest.approx(48.0)


def test_levels_are_normalized():
    x = textured((64, 64), seed=4)
    c = cs.decompose(x, 6)
    assert np.allclose(c.levels.mean(axis=(1, 2)), 0, atol=1e-10)
    assert np.allclose(c.levels.std(axis=(1, 2)), 1, atol=1e-10)


def test_constant_field_goes_to_first_level():
    c = cs.decompose(np.full((64, 64), 0.8), 6)
    assert c.level_means[0] == pytest.approx(0.8)
    assert np.allclose(c.level_means[1:], 0, atol=1e-12)
    assert np.allclose(c.level_stds[1:], 0, atol=1e-12)
    assert np.allclose(cs.recompose(c), 0.8)


def _oracle_weights(k, n_levels, size):
    """Gaussian-in-log-wavenumber responses at a single wavenumber ``k``."""
    centers = [(size / 2) ** (j / (n_levels - 1)) for j in range(n_levels)]
    spacing = np.log(centers[1]) - np.log(centers[0])
    raw = []
    for j, c in enumerate(centers):
        g = np.exp(-((np.log(k) - np.log(c)) ** 2) / (2 * (0.4 * spacing) ** 2))
        if (j == 0 and k <= c) or (j == n_levels - 1 and k >= c):
            g = 1.0
        raw.append(g)
    raw = np.array(raw)
    return raw / raw.sum()


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_sinusoid_at_center_lands_in_its_level(level):
    n = 64
    k = 2**level  # centers for a 64-px domain are 1, 2, 4, ..., 32
    x = np.cos(2 * np.pi * k * np.arange(n) / n)[None, :] * np.ones((n, 1))
    c = cs.decompose(x, 6)
    var = c.level_stds**2
    frac = var[level] / x.var()
    expected = _oracle_weights(k, 6, n)[level] ** 2
    assert frac == pytest.approx(expected, rel=1e-6)
    assert frac >= 0.8


def test_too_small():
    with pytest.raises(TooSmallError):
        cs.decompose(np.zeros((32, 64)), 6)
    with pytest.raises(ValueError):
        cs.decompose(np.full((64, 64), np.nan), 6)


def test_yule_walker_examples():
    c = cs.yule_walker_ar2(0.0, 0.0)
    assert c.phi1[0] == 0 and c.phi2[0] == 0 and c.innovation_variance[0] == 1
    c = cs.yule_walker_ar2(0.9, 0.81)
    assert c.phi1[0] == pytest.approx(0.9)
    assert c.phi2[0] == pytest.approx(0.0, abs=1e-12)
    c = cs.yule_walker_ar2(1.0, 1.0)
    assert c.phi1[0] == pytest.approx(0.999)
    assert c.phi2[0] == 0.0


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_coefficients_inside_stationarity_triangle(r1, r2):
    c = cs.yule_walker_ar2(r1, r2)
    p1, p2 = c.phi1[0], c.phi2[0]
    assert abs(p2) < 1 and p1 + p2 < 1 and p2 - p1 < 1
    assert c.innovation_variance[0] >= 0


def _simulate_ar2(phi1, phi2, n, seed):
    rng = np.random.default_rng(seed)
    x = np.zeros(n + 200)
    e = rng.standard_normal(n + 200)
    for t in range(2, n + 200):
        x[t] = phi1 * x[t - 1] + phi2 * x[t - 2] + e[t]
    return x[200:]


def test_recovers_ar2_series():
    for seed in range(5):
        c = cs.fit_ar2_series(_simulate_ar2(0.6, 0.2, 10_000, seed))
        assert abs(c.phi1[0] - 0.6) <= 0.05
        assert abs(c.phi2[0] - 0.2) <= 0.05


def test_fit_ar2_on_field_history():
    # every pixel follows the same AR(2) law independently
    rng = np.random.default_rng(3)
    n_t, shape = 400, (8, 8)
    x = np.zeros((n_t,) + shape)
    for t in range(2, n_t):
        x[t] = 0.5 * x[t - 1] + 0.3 * x[t - 2] + rng.standard_normal(shape)
    history = x[100:, None]  # one level
    c = cs.fit_ar2(history)
    assert c.phi1[0] == pytest.approx(0.5, abs=0.05)
    assert c.phi2[0] == pytest.approx(0.3, abs=0.05)


def test_static_history_is_degenerate():
    x = textured((64, 64))
    levels = cs.decompose(x, 6).levels
    history = np.stack([levels] * 4)
    c = cs.fit_ar2(history)
    assert np.allclose(c.phi1, 0.999)
    assert np.allclose(c.phi2, 0.0)


def test_white_innovation_has_no_memory():
    coeffs = cs.ArCoefficients(np.zeros(1), np.zeros(1), np.ones(1))
    x_prev = np.zeros((1, 64, 64))
    x_curr = np.zeros((1, 64, 64))
    template = textured((64, 64))
    series = []
    for lead in range(1, 101):
        eps = cs.correlated_noise(template, 1, 0, lead)[None]
        x_next = cs.ar2_step(x_prev, x_curr, coeffs, eps)
        x_prev, x_curr = x_curr, x_next
        series.append(x_next[0])
    series = np.array(series)
    # lag-1 autocorrelation pooled over all pixels
    r1 = np.corrcoef(series[1:].ravel(), series[:-1].ravel())[0, 1]
    assert abs(r1) <= 0.1


def test_noise_normalization_and_determinism():
    rng = np.random.default_rng(0)
    template = rng.random((384, 512))
    a = cs.correlated_noise(template, 7, 2, 3)
    assert abs(a.mean()) <= 0.01
    assert 0.98 <= a.var() <= 1.02
    assert np.array_equal(a, cs.correlated_noise(template, 7, 2, 3))
    assert not np.array_equal(a, cs.correlated_noise(template, 7, 2, 4))
    assert not np.array_equal(a, cs.correlated_noise(template, 7, 3, 3))


def test_noise_spectrum_follows_template():
    # red-noise template with a power-law spectrum
    rng = np.random.default_rng(11)
    n = 256
    k = cs.radial_wavenumber((n, n))
    amp = np.zeros_like(k)
    amp[k > 0] = k[k > 0] ** -1.5
    template = np.fft.ifft2(np.fft.fft2(rng.standard_normal((n, n))) * amp).real
    noise = cs.correlated_noise(template, 0, 1, 1)
    _, p_t = cs.radial_power_spectrum(template)
    _, p_n = cs.radial_power_spectrum(noise)
    r = np.corrcoef(np.log(p_t), np.log(p_n))[0, 1]
    assert r >= 0.9
    assert np.corrcoef(p_t, p_n)[0, 1] >= 0.9
