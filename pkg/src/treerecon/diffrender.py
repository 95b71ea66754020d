"""Differentiable soft rasterizers with analytic position gradients.

Each point splats a truncated Gaussian footprint g = exp(-d^2 / 2 sigma^2)
onto nearby pixel centers (zero beyond trunc*sigma). Pixel values compose as:

  silhouette / shadow:  O = 1 - prod_i (1 - alpha * g_i)      (soft or)
  DSM:                  H = sum(w z) / (sum(w) + eps_ground),  w = g * exp(beta z)

The shadow renderer first slides each point along the sun ray to the ground
plane; its z gradient flows through that projection's constant Jacobian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Grid, GridSpec, PointCloud, SunConfig
from .errors import SpecMismatch
from .sensor import shadow_offsets

# below this, 1 - alpha*g is treated as a hit and leave-one-out products are
# recomputed directly instead of divided out
_LOO_FLOOR = 1e-12


@dataclass(frozen=True)
class SoftConfig:
    """Soft rasterization constants."""

    sigma: float  # Gaussian splat bandwidth, meters
    alpha: float = 0.9  # per-point opacity
    beta: float = 2.0  # soft-max height temperature, 1/m
    trunc: float = 3.0  # influence cutoff at trunc*sigma
    eps_ground: float = 1e-4  # virtual ground sample weight in soft DSM

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.trunc < 1.0:
            raise ValueError("trunc must be >= 1")
        if self.eps_ground <= 0:
            raise ValueError("eps_ground must be positive")


def default_soft_config(pixel_size: float) -> SoftConfig:
    return SoftConfig(sigma=1.0 * pixel_size)


@dataclass
class GradBuffer:
    """Per-point position gradients (N, 3)."""

    d_positions: np.ndarray

    def __post_init__(self):
        self.d_positions = np.asarray(self.d_positions, dtype=np.float64).reshape(-1, 3)

    @staticmethod
    def zeros(n: int) -> "GradBuffer":
        return GradBuffer(np.zeros((n, 3)))


class _Footprints:
    """Per-point truncated Gaussian footprints on the pixel grid.

    Holds, for every point, a (k x k) window of pixel indices, offsets to
    pixel centers, and Gaussian weights g (zeroed outside the grid and the
    truncation radius). Shared by the forward and backward passes.
    """

    def __init__(self, xy: np.ndarray, spec: GridSpec, cfg: SoftConfig):
        self.spec = spec
        self.cfg = cfg
        self.n = len(xy)
        ps = spec.pixel_size
        if math.isfinite(cfg.trunc):
            r = int(np.ceil(cfg.trunc * cfg.sigma / ps)) + 1
        else:
            # untruncated: window must reach every grid pixel from any point
            if self.n:
                du = max(
                    abs(xy[:, 0].min() - spec.origin_x),
                    abs(xy[:, 0].max() - spec.origin_x - (spec.width - 1) * ps),
                )
                dv = max(
                    abs(xy[:, 1].min() - spec.origin_y),
                    abs(xy[:, 1].max() - spec.origin_y - (spec.height - 1) * ps),
                )
                r = int(np.ceil(max(du, dv) / ps)) + max(spec.width, spec.height)
            else:
                r = 1
        if self.n * (2 * r + 1) ** 2 > 2e8:
            raise MemoryError("soft rasterization window too large")

        offsets = np.arange(-r, r + 1)
        u = (xy[:, 0] - spec.origin_x) / ps
        v = (xy[:, 1] - spec.origin_y) / ps
        self.cols = np.round(u).astype(np.int64)[:, None, None] + offsets[None, None, :]
        self.rows = np.round(v).astype(np.int64)[:, None, None] + offsets[None, :, None]
        px = spec.origin_x + self.cols * ps
        py = spec.origin_y + self.rows * ps
        self.dx = xy[:, 0, None, None] - px  # point minus pixel center
        self.dy = xy[:, 1, None, None] - py
        d2 = self.dx**2 + self.dy**2
        inside = (
            (self.cols >= 0)
            & (self.cols < spec.width)
            & (self.rows >= 0)
            & (self.rows < spec.height)
        )
        if math.isfinite(cfg.trunc):
            inside &= d2 <= (cfg.trunc * cfg.sigma) ** 2
        self.mask = inside
        self.g = np.where(inside, np.exp(-d2 / (2.0 * cfg.sigma**2)), 0.0)
        self.flat = np.where(inside, self.rows * spec.width + self.cols, 0)

    def scatter_sum(self, contrib: np.ndarray) -> np.ndarray:
        """Sum per-(point, pixel) contributions into a flat pixel array."""
        m = self.mask
        return np.bincount(
            self.flat[m], weights=contrib[m], minlength=self.spec.n_pixels
        )

    def gather(self, flat_pixels: np.ndarray) -> np.ndarray:
        """Read a flat pixel array at every footprint slot (0 where masked)."""
        return np.where(self.mask, flat_pixels[self.flat], 0.0)


def _check_spec(d_pixels: Grid, spec: GridSpec):
    if d_pixels.spec != spec:
        raise SpecMismatch("pixel gradient grid spec does not match render spec")


# ---------------------------------------------------------------------------
# soft-or occupancy (silhouette)


def _occupancy_forward(fp: _Footprints):
    """Returns (occupancy flat array, summed log(1 - alpha g) flat array)."""
    a = fp.cfg.alpha
    t = 1.0 - a * fp.g
    with np.errstate(divide="ignore"):
        log_t = np.where(fp.mask, np.log(np.maximum(t, 0.0)), 0.0)
    log_prod = fp.scatter_sum(log_t)
    return 1.0 - np.exp(log_prod), log_prod


def _occupancy_backward(
    fp: _Footprints, d_flat: np.ndarray, log_prod: np.ndarray | None = None
) -> np.ndarray:
    """d(loss)/d(xy) per point, shape (N, 2), for the soft-or composition."""
    a = fp.cfg.alpha
    t = 1.0 - a * fp.g
    if log_prod is None:
        _, log_prod = _occupancy_forward(fp)
    # dO/dg_i = alpha * prod_{j != i} (1 - alpha g_j); divide the full product
    # back out unless the factor is (near) zero, then recompute leave-one-out
    with np.errstate(divide="ignore", invalid="ignore"):
        loo = np.exp(fp.gather(log_prod) - np.where(fp.mask, np.log(t), 0.0))
    hit = fp.mask & (t < _LOO_FLOOR)
    if np.any(hit):
        loo[~fp.mask] = 0.0
        for i, wi, wj in zip(*np.nonzero(hit)):
            pix = fp.flat[i, wi, wj]
            same = fp.mask & (fp.flat == pix)
            same[i, wi, wj] = False
            loo[i, wi, wj] = np.prod(t[same])
    loo = np.where(fp.mask, loo, 0.0)

    # dL/dg = d_pixel * alpha * loo; dg/dxy = -g * (xy - c) / sigma^2
    dL_dg = fp.gather(d_flat) * a * loo
    scale = dL_dg * fp.g / fp.cfg.sigma**2
    gx = -(scale * fp.dx).sum(axis=(1, 2))
    gy = -(scale * fp.dy).sum(axis=(1, 2))
    return np.stack([gx, gy], axis=1)


def soft_silhouette(cloud: PointCloud, spec: GridSpec, cfg: SoftConfig) -> Grid:
    """Soft occupancy map in [0, 1)."""
    fp = _Footprints(cloud.positions[:, :2], spec, cfg)
    occ, _ = _occupancy_forward(fp)
    return Grid(spec, occ.reshape(spec.height, spec.width))


def soft_silhouette_backward(
    cloud: PointCloud, spec: GridSpec, cfg: SoftConfig, d_pixels: Grid
) -> GradBuffer:
    """Backprop pixel gradients to point positions; z gradient is zero."""
    _check_spec(d_pixels, spec)
    fp = _Footprints(cloud.positions[:, :2], spec, cfg)
    gxy = _occupancy_backward(fp, d_pixels.values.reshape(-1))
    grad = np.zeros((len(cloud), 3))
    grad[:, :2] = gxy
    return GradBuffer(grad)


# ---------------------------------------------------------------------------
# soft DSM


def soft_dsm(cloud: PointCloud, spec: GridSpec, cfg: SoftConfig) -> Grid:
    """Smooth height map: soft-max-weighted mean z with a virtual ground sample."""
    fp = _Footprints(cloud.positions[:, :2], spec, cfg)
    z = cloud.positions[:, 2]
    w = fp.g * np.exp(cfg.beta * z)[:, None, None]
    wsum = fp.scatter_sum(w)
    wzsum = fp.scatter_sum(w * z[:, None, None])
    h = wzsum / (wsum + cfg.eps_ground)
    return Grid(spec, h.reshape(spec.height, spec.width))


def soft_dsm_backward(
    cloud: PointCloud, spec: GridSpec, cfg: SoftConfig, d_pixels: Grid
) -> GradBuffer:
    """Quotient-rule gradients of the soft DSM in x, y, and z."""
    _check_spec(d_pixels, spec)
    fp = _Footprints(cloud.positions[:, :2], spec, cfg)
    z = cloud.positions[:, 2]
    w = fp.g * np.exp(cfg.beta * z)[:, None, None]
    wsum = fp.scatter_sum(w)
    wzsum = fp.scatter_sum(w * z[:, None, None])
    denom = wsum + cfg.eps_ground
    h = wzsum / denom

    d = fp.gather(d_pixels.values.reshape(-1))
    inv_denom = fp.gather(1.0 / denom)
    # dH/dw = (z - H) / denom; w varies with x, y (through g) and z (through exp)
    dH_dw = (z[:, None, None] - fp.gather(h)) * inv_denom
    common = d * dH_dw * w / fp.cfg.sigma**2
    gx = -(common * fp.dx).sum(axis=(1, 2))
    gy = -(common * fp.dy).sum(axis=(1, 2))
    # z enters the numerator directly and w through exp(beta z)
    gz = (d * (w * inv_denom + dH_dw * cfg.beta * w)).sum(axis=(1, 2))
    return GradBuffer(np.stack([gx, gy, gz], axis=1))


# ---------------------------------------------------------------------------
# shadow = soft-or occupancy of ground-projected points


def project_to_ground(
    cloud: PointCloud, sun: SunConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Slide points along the sun ray to z = 0.

    Returns the (N, 2) ground coordinates and the constant 2x3 Jacobian
    d(shadow_xy)/d(point_xyz), shared by all points.
    """
    kx, ky = shadow_offsets(sun)
    xy = cloud.positions[:, :2] + cloud.positions[:, 2:3] * np.array([kx, ky])
    jac = np.array([[1.0, 0.0, kx], [0.0, 1.0, ky]])
    return xy, jac


def soft_shadow(
    cloud: PointCloud, sun: SunConfig, spec: GridSpec, cfg: SoftConfig
) -> Grid:
    """Soft shadow mask: soft silhouette of the ground-projected points."""
    xy, _ = project_to_ground(cloud, sun)
    fp = _Footprints(xy, spec, cfg)
    occ, _ = _occupancy_forward(fp)
    return Grid(spec, occ.reshape(spec.height, spec.width))


def soft_shadow_backward(
    cloud: PointCloud, sun: SunConfig, spec: GridSpec, cfg: SoftConfig, d_pixels: Grid
) -> GradBuffer:
    """Silhouette backward chained through the ground projection Jacobian."""
    _check_spec(d_pixels, spec)
    xy, jac = project_to_ground(cloud, sun)
    fp = _Footprints(xy, spec, cfg)
    gxy = _occupancy_backward(fp, d_pixels.values.reshape(-1))
    return GradBuffer(gxy @ jac)


# ---------------------------------------------------------------------------
# fused single-footprint forward+backward paths (used by the combined loss)


def occupancy_forward_backward(
    xy: np.ndarray, spec: GridSpec, cfg: SoftConfig, d_flat_of_pred
) -> tuple[np.ndarray, np.ndarray]:
    """One-footprint occupancy pass: returns (pred_flat, d(xy) gradients).

    d_flat_of_pred maps the predicted flat pixel array to the per-pixel
    loss gradient, letting the caller compute its loss in between.
    """
    fp = _Footprints(xy, spec, cfg)
    occ, log_prod = _occupancy_forward(fp)
    d_flat = d_flat_of_pred(occ)
    return occ, _occupancy_backward(fp, d_flat, log_prod)


def dsm_forward_backward(
    positions: np.ndarray, spec: GridSpec, cfg: SoftConfig, d_flat_of_pred
) -> tuple[np.ndarray, np.ndarray]:
    """One-footprint soft-DSM pass: returns (pred_flat, (N, 3) gradients)."""
    fp = _Footprints(positions[:, :2], spec, cfg)
    z = positions[:, 2]
    w = fp.g * np.exp(cfg.beta * z)[:, None, None]
    wsum = fp.scatter_sum(w)
    wzsum = fp.scatter_sum(w * z[:, None, None])
    denom = wsum + cfg.eps_ground
    h = wzsum / denom
    d_flat = d_flat_of_pred(h)

    d = fp.gather(d_flat)
    inv_denom = fp.gather(1.0 / denom)
    dH_dw = (z[:, None, None] - fp.gather(h)) * inv_denom
    common = d * dH_dw * w / cfg.sigma**2
    gx = -(common * fp.dx).sum(axis=(1, 2))
    gy = -(common * fp.dy).sum(axis=(1, 2))
    gz = (d * (w * inv_denom + dH_dw * cfg.beta * w)).sum(axis=(1, 2))
    return h, np.stack([gx, gy, gz], axis=1)
