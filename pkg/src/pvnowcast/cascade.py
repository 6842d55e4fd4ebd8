"""
FFT bandpass cascades, AR(2) fitting and spatially correlated noise.

The cascade splits a field into ``n_levels`` spatial scales with Gaussian
filters in log-wavenumber space.  The filter weights are normalised to sum
to one at every wavenumber, so summing the (denormalised) levels gives back
the input up to floating-point error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import TooSmallError
from .rng import NOISE, generator

# Gaussian width in log-wavenumber, as a fraction of the log spacing between
# neighbouring centers.
FILTER_WIDTH = 0.4
STATIONARITY_MARGIN = 1e-3
DEGENERATE_DAMPING = 0.999


def radial_wavenumber(shape) -> np.ndarray:
    """Radial wavenumber in cycles per domain (scaled to the longer side)."""
    nr, nc = shape
    size = max(nr, nc)
    ky = np.fft.fftfreq(nr) * size
    kx = np.fft.fftfreq(nc) * size
    return np.hypot(ky[:, None], kx[None, :])


def center_wavenumbers(shape, n_levels: int) -> np.ndarray:
    if n_levels == 1:
        return np.array([0.0])
    half = max(shape) / 2.0
    return half ** (np.arange(n_levels) / (n_levels - 1))


def filter_weights(r, centers) -> np.ndarray:
    """Filter responses at wavenumbers ``r`` (any shape) -> (n_levels, *r.shape)."""
    r = np.asarray(r, dtype=float)
    n = len(centers)
    if n == 1:
        return np.ones((1,) + r.shape)
    log_c = np.log(centers)
    sigma = FILTER_WIDTH * (log_c[1] - log_c[0])
    log_r = np.log(np.maximum(r, 1e-300))
    g = np.exp(-((log_r[None] - log_c.reshape((n,) + (1,) * r.ndim)) ** 2) / (2 * sigma**2))
    g[0][r <= centers[0]] = 1.0
    g[-1][r >= centers[-1]] = 1.0
    # the DC component belongs to the largest scale only
    g[1:, r == 0] = 0.0
    return g / g.sum(axis=0)


@lru_cache(maxsize=16)
def _filter_bank(shape, n_levels):
    centers = center_wavenumbers(shape, n_levels)
    weights = filter_weights(radial_wavenumber(shape), centers)
    weights.flags.writeable = False
    return weights, centers


@dataclass(frozen=True, eq=False)
class Cascade:
    """Normalised spectral levels, largest scale first.

    ``levels[k] * level_stds[k] + level_means[k]`` is the k-th bandpassed
    component of the input field.
    """

    levels: np.ndarray
    center_wavenumbers: np.ndarray
    level_means: np.ndarray
    level_stds: np.ndarray

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def _values(field):
    return np.asarray(getattr(field, "values", field), dtype=np.float64)


def decompose(field, n_levels: int = 6) -> Cascade:
    """Bandpass cascade of a NaN-free field (GridField or 2-D array)."""
    x = _values(field)
    if np.isnan(x).any():
        raise ValueError("decompose needs a NaN-free field; fill missing values first")
    if min(x.shape) < 2**n_levels:
        raise TooSmallError(
            f"field {x.shape} too small for {n_levels} levels (needs >= {2**n_levels} px)"
        )
    weights, centers = _filter_bank(x.shape, n_levels)
    spectrum = np.fft.fft2(x)
    levels = np.fft.ifft2(weights * spectrum[None]).real
    means = levels.mean(axis=(1, 2))
    stds = levels.std(axis=(1, 2))
    tiny = 1e-12 * max(1.0, float(np.abs(x).max()))
    norm = np.zeros_like(levels)
    for k in range(n_levels):
        if stds[k] > tiny:
            norm[k] = (levels[k] - means[k]) / stds[k]
    return Cascade(norm, centers, means, stds)


def recompose(cascade: Cascade, levels=None) -> np.ndarray:
    """Sum denormalised levels; ``levels`` overrides the normalised arrays."""
    levels = cascade.levels if levels is None else levels
    return np.einsum("k...,k->...", levels, cascade.level_stds) + cascade.level_means.sum()


# --------------------------------------------------------------------------
# AR(2)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ArCoefficients:
    phi1: np.ndarray
    phi2: np.ndarray
    innovation_variance: np.ndarray


def _yw(r1, r2):
    r1 = float(r1)
    r2 = float(r2)
    if r1 * r1 >= 1.0 - 1e-12:
        phi1, phi2 = r1 * DEGENERATE_DAMPING, 0.0
    else:
        phi1 = r1 * (1.0 - r2) / (1.0 - r1 * r1)
        phi2 = (r2 - r1 * r1) / (1.0 - r1 * r1)
    # project into the stationarity triangle
    m = STATIONARITY_MARGIN
    phi2 = min(max(phi2, -1.0 + m), 1.0 - m)
    if phi1 + phi2 > 1.0 - m:
        phi1 = 1.0 - m - phi2
    if phi2 - phi1 > 1.0 - m:
        phi1 = phi2 - 1.0 + m
    innov = max(1.0 - phi1 * r1 - phi2 * r2, 0.0)
    return phi1, phi2, innov


def yule_walker_ar2(r1, r2) -> ArCoefficients:
    """AR(2) coefficients from lag-1 and lag-2 autocorrelations.

    Accepts scalars or per-level arrays.
    """
    r1a, r2a = np.broadcast_arrays(np.atleast_1d(r1), np.atleast_1d(r2))
    out = np.array([_yw(a, b) for a, b in zip(r1a, r2a)])
    return ArCoefficients(out[:, 0], out[:, 1], out[:, 2])


def _corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a * a).sum() * (b * b).sum())
    if den == 0.0:
        # two flat arrays carry no change: treat as perfectly persistent
        return 1.0
    return float((a * b).sum() / den)


def lagged_correlations(history, mask=None):
    """Per-level lag-1 and lag-2 correlations of a level history.

    ``history`` has shape (n_times, n_levels, ny, nx), oldest first.  Lag-k
    correlations are averaged over all available pairs.
    """
    history = np.asarray(history, dtype=float)
    t, n = history.shape[:2]
    if t < 3:
        raise ValueError("AR(2) fitting needs at least three time steps")
    sel = np.ones(history.shape[2:], dtype=bool) if mask is None else np.asarray(mask, bool)
    r = np.zeros((2, n))
    for lag in (1, 2):
        for k in range(n):
            vals = [_corr(history[i + lag, k][sel], history[i, k][sel]) for i in range(t - lag)]
            r[lag - 1, k] = np.mean(vals)
    return r[0], r[1]


def fit_ar2(history, mask=None) -> ArCoefficients:
    """Fit per-level AR(2) models to a co-registered level history."""
    r1, r2 = lagged_correlations(history, mask)
    return yule_walker_ar2(r1, r2)


def series_autocorrelation(x, max_lag=2) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    c0 = np.dot(x, x)
    return np.array([np.dot(x[lag:], x[: len(x) - lag]) / c0 for lag in range(1, max_lag + 1)])


def fit_ar2_series(x) -> ArCoefficients:
    """Yule-Walker AR(2) fit of a single time series."""
    r1, r2 = series_autocorrelation(x, 2)
    return yule_walker_ar2(r1, r2)


def ar2_step(x_prev, x_curr, coeffs: ArCoefficients, innovation=None):
    """One AR(2) update per level; arrays are (n_levels, ny, nx)."""
    shape = (-1,) + (1,) * (x_curr.ndim - 1)
    out = coeffs.phi1.reshape(shape) * x_curr + coeffs.phi2.reshape(shape) * x_prev
    if innovation is not None:
        out = out + np.sqrt(coeffs.innovation_variance).reshape(shape) * innovation
    return out


# --------------------------------------------------------------------------
# noise
# --------------------------------------------------------------------------


def fill_nan(values):
    values = np.asarray(values, dtype=np.float64)
    valid = np.isfinite(values)
    if valid.all():
        return values
    fill = values[valid].mean() if valid.any() else 0.0
    return np.where(valid, values, fill)


def correlated_noise(template, seed: int, member: int, lead: int) -> np.ndarray:
    """Gaussian noise sharing the amplitude spectrum of ``template``.

    The output has zero mean and unit variance and depends only on
    ``(seed, member, lead)`` and the template.
    """
    x = fill_nan(_values(template))
    amplitude = np.abs(np.fft.fft2(x - x.mean()))
    rng = generator(seed, NOISE, member, lead)
    white = rng.standard_normal(x.shape)
    noise = np.fft.ifft2(np.fft.fft2(white) * amplitude).real
    std = noise.std()
    if std == 0.0:
        # flat template: fall back to white noise
        noise, std = white, white.std()
    return (noise - noise.mean()) / std


def radial_power_spectrum(x) -> tuple[np.ndarray, np.ndarray]:
    """Radially averaged power spectrum, integer wavenumber bins 1..max/2."""
    x = np.asarray(x, dtype=float)
    power = np.abs(np.fft.fft2(x - x.mean())) ** 2
    r = np.rint(radial_wavenumber(x.shape)).astype(int)
    kmax = max(x.shape) // 2
    sums = np.bincount(r.ravel(), power.ravel(), minlength=kmax + 1)
    counts = np.bincount(r.ravel(), minlength=kmax + 1)
    k = np.arange(1, kmax + 1)
    return k, sums[1 : kmax + 1] / np.maximum(counts[1 : kmax + 1], 1)
