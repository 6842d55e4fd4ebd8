"""
Cloud motion vectors and semi-Lagrangian advection.

Motion is estimated with a pyramidal, iteratively warped Lucas-Kanade
solver using a Gaussian-weighted window.  Flow components are expressed in
pixels per time step: ``u`` towards increasing column (east), ``v`` towards
increasing row (north, since row 0 is the southern edge).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DataQualityError, DimensionError, InsufficientDataError
from .grid import GridField, GridGeometry, Kind, sample_bilinear, write_grid
from .rng import PERTURBATION, generator


@dataclass(frozen=True, eq=False)
class FlowField:
    geometry: GridGeometry
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.shape != self.geometry.shape or v.shape != self.geometry.shape:
            raise DimensionError("flow components must match the grid shape")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow components must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> "FlowField":
        return cls(geometry, np.zeros(geometry.shape), np.zeros(geometry.shape))

    @classmethod
    def uniform(cls, geometry: GridGeometry, u: float, v: float) -> "FlowField":
        return cls(geometry, np.full(geometry.shape, float(u)), np.full(geometry.shape, float(v)))


@dataclass(frozen=True)
class PerturbationParams:
    sigma_speed: float = 0.1
    sigma_angle: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_speed < 0 or self.sigma_angle < 0:
            raise ValueError("perturbation standard deviations must be non-negative")


def write_flow(path_u, path_v, flow: FlowField, timestamp) -> None:
    """Store a flow field as two SGF1 files (kinds FLOW_U and FLOW_V)."""
    write_grid(path_u, GridField(flow.geometry, timestamp, flow.u.astype(np.float32), Kind.FLOW_U))
    write_grid(path_v, GridField(flow.geometry, timestamp, flow.v.astype(np.float32), Kind.FLOW_V))


# --------------------------------------------------------------------------
# Lucas-Kanade
# --------------------------------------------------------------------------

MIN_EIGENVALUE = 1e-4
MIN_VALID_FRACTION = 0.3


def _fill(values):
    """NaN-filled copy plus validity mask."""
    valid = np.isfinite(values)
    filled = np.where(valid, values, np.mean(values[valid]) if valid.any() else 0.0)
    return filled, valid.astype(np.float64)


def _pyramid(img, mask, levels):
    imgs, masks = [img], [mask]
    for _ in range(levels - 1):
        img = ndimage.gaussian_filter(img, 1.0, mode="nearest")[::2, ::2]
        # a coarse pixel is valid only if its whole neighbourhood was
        mask = (ndimage.minimum_filter(mask, size=3, mode="nearest") > 0)[::2, ::2].astype(float)
        imgs.append(img)
        masks.append(mask)
    return imgs, masks


def _upsample(a, shape):
    rows, cols = np.meshgrid(np.arange(shape[0]) / 2.0, np.arange(shape[1]) / 2.0, indexing="ij")
    return ndimage.map_coordinates(a, [rows, cols], order=1, mode="nearest")


def _lk_level(prev, curr, mprev, mcurr, u, v, sigma, truncate, n_iter):
    """Refine (u, v) at one pyramid level; returns flow, solvability mask."""
    nr, nc = prev.shape
    rows, cols = np.meshgrid(np.arange(nr, dtype=float), np.arange(nc, dtype=float), indexing="ij")
    smooth = lambda a: ndimage.gaussian_filter(a, sigma, truncate=truncate, mode="constant")  # noqa: E731
    gy_p, gx_p = np.gradient(prev)
    ok = np.zeros(prev.shape, dtype=bool)
    for _ in range(n_iter):
        r, c = rows + v, cols + u
        inside = (r >= 0) & (r <= nr - 1) & (c >= 0) & (c <= nc - 1)
        warped = ndimage.map_coordinates(curr, [r, c], order=1, mode="nearest")
        wmask = ndimage.map_coordinates(mcurr, [r, c], order=1, mode="nearest") > 0.999
        w = mprev * (inside & wmask)
        gy_w, gx_w = np.gradient(warped)
        gx = 0.5 * (gx_p + gx_w)
        gy = 0.5 * (gy_p + gy_w)
        gt = warped - prev

        sxx = smooth(w * gx * gx)
        syy = smooth(w * gy * gy)
        sxy = smooth(w * gx * gy)
        sxt = smooth(w * gx * gt)
        syt = smooth(w * gy * gt)
        frac = smooth(w)

        tr = sxx + syy
        det = sxx * syy - sxy * sxy
        disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
        lam_min = 0.5 * tr - disc
        ok = (lam_min >= MIN_EIGENVALUE * frac) & (frac >= MIN_VALID_FRACTION)
        safe = np.where(ok, det, 1.0)
        du = np.where(ok, -(syy * sxt - sxy * syt) / safe, 0.0)
        dv = np.where(ok, -(sxx * syt - sxy * sxt) / safe, 0.0)
        u = u + du
        v = v + dv
    return u, v, ok


def _idw_fill(u, v, ok, k=8):
    if ok.all():
        return u, v
    if not ok.any():
        return np.zeros_like(u), np.zeros_like(v)
    good = np.argwhere(ok)
    bad = np.argwhere(~ok)
    tree = cKDTree(good)
    k = min(k, len(good))
    dist, idx = tree.query(bad, k=k)
    dist = dist.reshape(len(bad), k)
    idx = idx.reshape(len(bad), k)
    wts = 1.0 / np.maximum(dist, 1e-12) ** 2
    wts /= wts.sum(axis=1, keepdims=True)
    u, v = u.copy(), v.copy()
    gu = u[ok][idx]
    gv = v[ok][idx]
    u[~ok] = (wts * gu).sum(axis=1)
    v[~ok] = (wts * gv).sum(axis=1)
    return u, v


def lucas_kanade(prev, curr, half_width=8, levels=3, n_iter=5):
    """Dense pyramidal LK flow between two arrays (NaN = missing).

    Returns ``(u, v, ok)`` where ``ok`` flags well-conditioned pixels at the
    finest level; ill-conditioned pixels carry zero motion.
    """
    p, mp = _fill(np.asarray(prev, dtype=np.float64))
    c, mc = _fill(np.asarray(curr, dtype=np.float64))
    levels = max(1, min(levels, int(np.log2(max(min(p.shape), 1) / 8)) + 1))
    pp, mpp = _pyramid(p, mp, levels)
    cp, mcp = _pyramid(c, mc, levels)
    sigma = half_width / 2.0
    u = np.zeros(pp[-1].shape)
    v = np.zeros(pp[-1].shape)
    ok = None
    for lev in range(levels - 1, -1, -1):
        if u.shape != pp[lev].shape:
            u = 2.0 * _upsample(u, pp[lev].shape)
            v = 2.0 * _upsample(v, pp[lev].shape)
        u, v, ok = _lk_level(pp[lev], cp[lev], mpp[lev], mcp[lev], u, v, sigma, 2.0, n_iter)
    u = np.where(ok, u, 0.0)
    v = np.where(ok, v, 0.0)
    return u, v, ok


def estimate_flow(seq, half_width: int = 8, levels: int = 3, n_iter: int = 5) -> FlowField:
    """Cloud motion vectors from a :class:`~pvnowcast.grid.FieldSequence`.

    Flow is estimated for every consecutive pair and averaged over the
    pairs where it is well conditioned.  Pixels that are ill-conditioned in
    every pair are filled by inverse-distance weighting from valid pixels,
    or set to zero if there are none.
    """
    fields = list(seq)
    if len(fields) < 2:
        raise InsufficientDataError("flow estimation needs at least two fields")
    stack = np.stack([f.values.astype(np.float64) for f in fields])
    nan_frac = float(np.isnan(stack).mean())
    if nan_frac > 0.5:
        raise DataQualityError(f"{nan_frac:.0%} of the input pixels are missing")
    geom = fields[0].geometry

    su = np.zeros(geom.shape)
    sv = np.zeros(geom.shape)
    cnt = np.zeros(geom.shape)
    for a, b in zip(stack[:-1], stack[1:]):
        u, v, ok = lucas_kanade(a, b, half_width, levels, n_iter)
        su += np.where(ok, u, 0.0)
        sv += np.where(ok, v, 0.0)
        cnt += ok
    ok = cnt > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(ok, su / np.maximum(cnt, 1), 0.0)
        v = np.where(ok, sv / np.maximum(cnt, 1), 0.0)
    u, v = _idw_fill(u, v, ok)
    return FlowField(geom, u, v)


# --------------------------------------------------------------------------
# advection and perturbation
# --------------------------------------------------------------------------


def advect_array(values, flow: FlowField, n_steps: int) -> np.ndarray:
    """Backward semi-Lagrangian displacement of a 2-D array."""
    nr, nc = flow.geometry.shape
    rows, cols = np.meshgrid(np.arange(nr, dtype=float), np.arange(nc, dtype=float), indexing="ij")
    return sample_bilinear(values, rows - n_steps * flow.v, cols - n_steps * flow.u)


def advect(field: GridField, flow: FlowField, n_steps: int) -> GridField:
    """Move ``field`` forward by ``n_steps`` steps of ``flow``.

    Each output pixel takes the bilinearly sampled input value at its
    position displaced by ``-n_steps * (u, v)``; sources outside the grid
    give NaN.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if field.geometry != flow.geometry:
        raise DimensionError("field and flow geometries differ")
    out = advect_array(field.values, flow, n_steps)
    return field.with_values(out.astype(np.float32))


def perturb_flow(flow: FlowField, params: PerturbationParams, member: int) -> FlowField:
    """Scale and rotate the whole flow by member-specific random factors.

    Member 0 is the unperturbed control.  Speed factors are log-normal with
    log-standard deviation ``sigma_speed``; rotations are normal with standard
    deviation ``sigma_angle`` degrees.
    """
    if member == 0:
        return flow
    rng = generator(params.seed, PERTURBATION, member)
    speed = np.exp(rng.normal(0.0, params.sigma_speed))
    angle = np.deg2rad(rng.normal(0.0, params.sigma_angle))
    ca, sa = np.cos(angle), np.sin(angle)
    u = speed * (ca * flow.u - sa * flow.v)
    v = speed * (sa * flow.u + ca * flow.v)
    return FlowField(flow.geometry, u, v)
