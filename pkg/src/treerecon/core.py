"""Core domain types: point clouds, georeferenced rasters, sun geometry, RNG.

Conventions used throughout:
  - meters everywhere, z up, flat ground plane at z = 0
  - pixel (u, v): u is the column (along +x), v is the row (along +y);
    the *center* of pixel (0, 0) sits at world (origin_x, origin_y)
  - raster arrays are numpy (height, width), row-major, so values[v, u]
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSun, MissingColors

CLASS_TRUNK = 0
CLASS_FOLIAGE = 1


@dataclass
class PointCloud:
    """N 3D points with optional per-point RGB colors and trunk/foliage class.

    positions: (N, 3) float64; colors: (N, 3) float64 in [0, 1] or None;
    classes: (N,) uint8 (0 trunk, 1 foliage) or None.
    """

    positions: np.ndarray
    colors: np.ndarray | None = None
    classes: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("point positions must be finite")
        n = len(self.positions)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != n:
                raise ValueError("colors length must match positions")
        if self.classes is not None:
            self.classes = np.asarray(self.classes, dtype=np.uint8).reshape(-1)
            if len(self.classes) != n:
                raise ValueError("classes length must match positions")

    def __len__(self):
        return len(self.positions)

    def require_colors(self) -> np.ndarray:
        if self.colors is None:
            raise MissingColors("point cloud has no colors")
        return self.colors


@dataclass(frozen=True)
class GridSpec:
    """Georeference of a raster: size, world origin of pixel (0,0) center, pixel size."""

    width: int
    height: int
    origin_x: float = 0.0
    origin_y: float = 0.0
    pixel_size: float = 1.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World x coords of columns and y coords of rows."""
        xs = self.origin_x + np.arange(self.width) * self.pixel_size
        ys = self.origin_y + np.arange(self.height) * self.pixel_size
        return xs, ys

    @staticmethod
    def centered(size: int, pixel_size: float) -> "GridSpec":
        """Square grid whose world extent is centered on (0, 0)."""
        half = (size - 1) / 2.0 * pixel_size
        return GridSpec(size, size, -half, -half, pixel_size)


@dataclass
class Grid:
    """Single-channel float raster with georeference."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(
            self.spec.height, self.spec.width
        )

    @staticmethod
    def zeros(spec: GridSpec) -> "Grid":
        return Grid(spec, np.zeros((spec.height, spec.width)))


@dataclass
class RgbGrid:
    """RGB raster with channels in [0, 1]."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(
            self.spec.height, self.spec.width, 3
        )

    @staticmethod
    def filled(spec: GridSpec, color) -> "RgbGrid":
        v = np.empty((spec.height, spec.width, 3))
        v[:] = color
        return RgbGrid(spec, v)


@dataclass(frozen=True)
class SunConfig:
    """Sun position: azimuth clockwise from +y (north), elevation above horizon."""

    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        if not (0.0 < self.elevation_deg <= 90.0):
            raise InvalidSun(
                f"sun elevation must be in (0, 90], got {self.elevation_deg}"
            )


def world_to_pixel(spec: GridSpec, x, y):
    """Continuous pixel coordinates (u, v) of world (x, y); may fall off-grid."""
    u = (np.asarray(x, dtype=np.float64) - spec.origin_x) / spec.pixel_size
    v = (np.asarray(y, dtype=np.float64) - spec.origin_y) / spec.pixel_size
    return u, v


def pixel_to_world(spec: GridSpec, u, v):
    """World (x, y) of continuous pixel coordinates (u, v)."""
    x = spec.origin_x + np.asarray(u, dtype=np.float64) * spec.pixel_size
    y = spec.origin_y + np.asarray(v, dtype=np.float64) * spec.pixel_size
    return x, y


def sun_direction(sun: SunConfig) -> np.ndarray:
    """Unit light-travel direction; always points downward (z < 0)."""
    phi = math.radians(sun.azimuth_deg)
    theta = math.radians(sun.elevation_deg)
    return np.array(
        [
            -math.sin(phi) * math.cos(theta),
            -math.cos(phi) * math.cos(theta),
            -math.sin(theta),
        ]
    )


class Rng:
    """Deterministic random stream: a seeded PCG64 generator.

    PCG64's output is fully specified by its seed, so identical seeds plus
    identical call sequences yield identical streams on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high_inclusive, size=None):
        return self._gen.integers(low, high_inclusive, size, endpoint=True)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def random(self, size=None):
        return self._gen.random(size)

    def choice(self, n, size=None, p=None):
        return self._gen.choice(n, size=size, p=p)
