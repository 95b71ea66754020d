"""Hard top-down renderers: DSM, orthophoto, silhouette, and shadow rasters.

Points are splatted as flat disks of fixed radius. These renderers are not
differentiable; they produce the optimization targets and synthetic sensor
data. Highest point wins color ties, with larger point index as tiebreak.
"""
from __future__ import annotations

import numpy as np

from .core import (
    Grid,
    GridSpec,
    PointCloud,
    RgbGrid,
    SunConfig,
    sun_direction,
    world_to_pixel,
)

GROUND_COLOR = (0.55, 0.5, 0.42)


def _covered_pixels(xy: np.ndarray, spec: GridSpec, splat_radius: float):
    """Indices of (point, pixel) pairs where the pixel center is inside a splat.

    Returns (point_idx, flat_pixel_idx) arrays.
    """
    if len(xy) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    ps = spec.pixel_size
    u, v = world_to_pixel(spec, xy[:, 0], xy[:, 1])
    r = int(np.ceil(splat_radius / ps)) + 1
    offsets = np.arange(-r, r + 1)
    cu = np.round(u).astype(np.int64)[:, None, None] + offsets[None, None, :]
    cv = np.round(v).astype(np.int64)[:, None, None] + offsets[None, :, None]
    px = spec.origin_x + cu * ps
    py = spec.origin_y + cv * ps
    d2 = (xy[:, 0, None, None] - px) ** 2 + (xy[:, 1, None, None] - py) ** 2
    ok = (
        (d2 <= splat_radius**2)
        & (cu >= 0)
        & (cu < spec.width)
        & (cv >= 0)
        & (cv < spec.height)
    )
    pt_idx = np.broadcast_to(
        np.arange(len(xy), dtype=np.int64)[:, None, None], ok.shape
    )[ok]
    flat = (cv * spec.width + cu)[ok]
    return pt_idx, flat


def render_dsm(cloud: PointCloud, spec: GridSpec, splat_radius: float) -> Grid:
    """Max-z disk splat; uncovered pixels are ground (0)."""
    if splat_radius <= 0:
        raise ValueError("splat_radius must be positive")
    out = np.zeros(spec.n_pixels)
    pt_idx, flat = _covered_pixels(cloud.positions[:, :2], spec, splat_radius)
    np.maximum.at(out, flat, cloud.positions[pt_idx, 2])
    return Grid(spec, out.reshape(spec.height, spec.width))


def render_ortho(cloud: PointCloud, spec: GridSpec, splat_radius: float) -> RgbGrid:
    """Color of the highest covering point per pixel; ground color elsewhere."""
    colors = cloud.require_colors()
    out = RgbGrid.filled(spec, GROUND_COLOR)
    pt_idx, flat = _covered_pixels(cloud.positions[:, :2], spec, splat_radius)
    if len(flat) == 0:
        return out
    # winner per pixel = lexicographically largest (z, point index)
    order = np.lexsort((pt_idx, cloud.positions[pt_idx, 2], flat))
    flat_sorted = flat[order]
    last = np.flatnonzero(np.r_[flat_sorted[1:] != flat_sorted[:-1], True])
    win_pixels = flat_sorted[last]
    win_points = pt_idx[order][last]
    out.values.reshape(-1, 3)[win_pixels] = colors[win_points]
    return out


def render_silhouette(dsm: Grid, h_min: float) -> Grid:
    """Binary occupancy: 1 where the DSM is strictly above h_min."""
    if h_min < 0:
        raise ValueError("h_min must be >= 0")
    return Grid(dsm.spec, (dsm.values > h_min).astype(np.float64))


def shadow_offsets(sun: SunConfig) -> tuple[float, float]:
    """Per-meter-of-height ground displacement of a cast shadow."""
    d = sun_direction(sun)
    # ray p + t*d hits z=0 at t = z / -d.z
    return d[0] / -d[2], d[1] / -d[2]


def render_shadow_hard(
    cloud: PointCloud, sun: SunConfig, spec: GridSpec, splat_radius: float
) -> Grid:
    """Binary shadow mask: points projected to the ground along the sun ray."""
    kx, ky = shadow_offsets(sun)
    xy = cloud.positions[:, :2] + cloud.positions[:, 2:3] * np.array([kx, ky])
    out = np.zeros(spec.n_pixels)
    pt_idx, flat = _covered_pixels(xy, spec, splat_radius)
    out[np.unique(flat)] = 1.0
    return Grid(spec, out.reshape(spec.height, spec.width))
