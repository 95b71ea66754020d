"""Procedural tree generator: parameter sampling, skeleton growth, point sampling.

Trees are grown as a recursive branching skeleton (no species grammar): the
trunk rises from the origin, and each segment below the maximum depth spawns
a few children rotated away from its axis. Ground-truth clouds are sampled
on trunk lateral surfaces and inside foliage spheres at branch tips.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CLASS_FOLIAGE,
    CLASS_TRUNK,
    Grid,
    GridSpec,
    PointCloud,
    Rng,
    RgbGrid,
    SunConfig,
)
from .errors import InvalidConfig
from .sensor import render_dsm, render_ortho, render_shadow_hard, render_silhouette

TRUNK_COLOR = (0.35, 0.23, 0.12)
FOLIAGE_COLOR = (0.15, 0.45, 0.15)
COLOR_JITTER = 0.08


@dataclass(frozen=True)
class TreeParams:
    """One tree's generation parameters.

    Scalar fields are concrete draws; children_per_branch and branch_angle_deg
    stay as ranges and are re-drawn per branch during growth.
    """

    trunk_height: float
    trunk_radius: float
    branch_depth: int
    children_per_branch: tuple[int, int]
    length_decay: float
    radius_decay: float
    branch_angle_deg: tuple[float, float]
    crown_radius: float
    foliage_fraction: float
    n_points: int

    def __post_init__(self):
        if not (0.0 < self.length_decay < 1.0 and 0.0 < self.radius_decay < 1.0):
            raise InvalidConfig("decay ratios must be strictly in (0, 1)")
        if self.branch_depth < 0:
            raise InvalidConfig("branch_depth must be >= 0")
        if self.n_points < 1:
            raise InvalidConfig("n_points must be >= 1")
        if not (0.0 <= self.foliage_fraction <= 1.0):
            raise InvalidConfig("foliage_fraction must be in [0, 1]")
        for name in ("children_per_branch", "branch_angle_deg"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise InvalidConfig(f"{name} range is empty")


@dataclass(frozen=True)
class TreeParamRanges:
    """Species-agnostic uniform ranges for sample_params."""

    trunk_height: tuple[float, float] = (3.0, 6.0)
    trunk_radius: tuple[float, float] = (0.15, 0.4)
    branch_depth: tuple[int, int] = (2, 3)
    children_per_branch: tuple[int, int] = (2, 4)
    length_decay: tuple[float, float] = (0.55, 0.75)
    radius_decay: tuple[float, float] = (0.55, 0.75)
    branch_angle_deg: tuple[float, float] = (25.0, 55.0)
    crown_radius: tuple[float, float] = (1.5, 3.5)
    foliage_fraction: tuple[float, float] = (0.75, 0.92)
    n_points: tuple[int, int] = (2000, 2000)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            lo, hi = getattr(self, name)
            if hi < lo:
                raise InvalidConfig(f"range for {name} is empty")


@dataclass
class Skeleton:
    """Branching skeleton: (start, end, radius, depth, parent) per segment."""

    starts: np.ndarray  # (S, 3)
    ends: np.ndarray  # (S, 3)
    radii: np.ndarray  # (S,)
    depths: np.ndarray  # (S,) int
    parents: np.ndarray  # (S,) int, -1 for the root

    def __len__(self):
        return len(self.radii)


def sample_params(rng: Rng, ranges: TreeParamRanges) -> TreeParams:
    """Draw one TreeParams uniformly from the configured ranges."""

    def unif(lo, hi):
        return lo if lo == hi else float(rng.uniform(lo, hi))

    def unif_int(lo, hi):
        return lo if lo == hi else int(rng.integers(lo, hi))

    return TreeParams(
        trunk_height=unif(*ranges.trunk_height),
        trunk_radius=unif(*ranges.trunk_radius),
        branch_depth=unif_int(*ranges.branch_depth),
        children_per_branch=ranges.children_per_branch,
        length_decay=unif(*ranges.length_decay),
        radius_decay=unif(*ranges.radius_decay),
        branch_angle_deg=ranges.branch_angle_deg,
        crown_radius=unif(*ranges.crown_radius),
        foliage_fraction=unif(*ranges.foliage_fraction),
        n_points=unif_int(*ranges.n_points),
    )


def _orthonormal_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors perpendicular to unit vector d."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    return u, v


def grow_skeleton(params: TreeParams, rng: Rng) -> Skeleton:
    """Grow the branching skeleton breadth-first from the trunk."""
    starts = [np.zeros(3)]
    ends = [np.array([0.0, 0.0, params.trunk_height])]
    radii = [params.trunk_radius]
    depths = [0]
    parents = [-1]

    frontier = [0]  # indices of segments that may still branch
    while frontier:
        nxt = []
        for idx in frontier:
            depth = depths[idx]
            if depth >= params.branch_depth:
                continue
            seg_vec = ends[idx] - starts[idx]
            seg_len = np.linalg.norm(seg_vec)
            direction = seg_vec / seg_len
            u, v = _orthonormal_basis(direction)
            k = int(rng.integers(*params.children_per_branch))
            for _ in range(k):
                psi = np.radians(float(rng.uniform(*params.branch_angle_deg)))
                lam = float(rng.uniform(0.0, 2.0 * np.pi))
                child_dir = np.cos(psi) * direction + np.sin(psi) * (
                    np.cos(lam) * u + np.sin(lam) * v
                )
                child_len = seg_len * params.length_decay
                starts.append(ends[idx].copy())
                ends.append(ends[idx] + child_dir * child_len)
                radii.append(radii[idx] * params.radius_decay)
                depths.append(depth + 1)
                parents.append(idx)
                nxt.append(len(radii) - 1)
        frontier = nxt

    return Skeleton(
        starts=np.array(starts),
        ends=np.array(ends),
        radii=np.array(radii),
        depths=np.array(depths, dtype=np.int64),
        parents=np.array(parents, dtype=np.int64),
    )


def _jittered_colors(base, n: int, rng: Rng) -> np.ndarray:
    c = np.tile(np.asarray(base), (n, 1))
    c += rng.uniform(-COLOR_JITTER, COLOR_JITTER, (n, 3))
    return np.clip(c, 0.0, 1.0)


def sample_cloud(skeleton: Skeleton, params: TreeParams, rng: Rng) -> PointCloud:
    """Sample exactly n_points labeled, colored points from the skeleton.

    Trunk points sit on segment lateral surfaces (chosen by surface area);
    foliage points fill spheres of crown_radius at terminal segment tips.
    Below-ground samples are clamped to z = 0 to keep the point budget exact.
    """
    n = params.n_points
    n_trunk = int(np.floor(n * (1.0 - params.foliage_fraction) + 0.5))
    n_foliage = n - n_trunk

    pieces, colors, classes = [], [], []

    if n_trunk > 0:
        axes = skeleton.ends - skeleton.starts
        lengths = np.linalg.norm(axes, axis=1)
        area = skeleton.radii * lengths
        prob = area / area.sum()
        seg = rng.choice(len(skeleton), size=n_trunk, p=prob)
        t = rng.random(n_trunk)[:, None]
        ang = rng.uniform(0.0, 2.0 * np.pi, n_trunk)
        pts = skeleton.starts[seg] + t * axes[seg]
        for i in range(n_trunk):
            u, v = _orthonormal_basis(axes[seg[i]] / lengths[seg[i]])
            pts[i] += skeleton.radii[seg[i]] * (np.cos(ang[i]) * u + np.sin(ang[i]) * v)
        pieces.append(pts)
        colors.append(_jittered_colors(TRUNK_COLOR, n_trunk, rng))
        classes.append(np.full(n_trunk, CLASS_TRUNK, dtype=np.uint8))

    if n_foliage > 0:
        terminal = np.flatnonzero(skeleton.depths == skeleton.depths.max())
        centers = skeleton.ends[terminal]
        pick = rng.integers(0, len(terminal) - 1, n_foliage)
        # uniform in a ball: direction from a normal draw, radius via cube root
        direction = rng.normal(size=(n_foliage, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = params.crown_radius * rng.random(n_foliage) ** (1.0 / 3.0)
        pts = centers[pick] + direction * radius[:, None]
        pieces.append(pts)
        colors.append(_jittered_colors(FOLIAGE_COLOR, n_foliage, rng))
        classes.append(np.full(n_foliage, CLASS_FOLIAGE, dtype=np.uint8))

    positions = np.concatenate(pieces)
    positions[:, 2] = np.maximum(positions[:, 2], 0.0)
    return PointCloud(
        positions=positions,
        colors=np.concatenate(colors),
        classes=np.concatenate(classes),
    )


@dataclass(frozen=True)
class SceneConfig:
    """Everything generate_scene needs besides the seed."""

    ranges: TreeParamRanges = field(default_factory=TreeParamRanges)
    spec: GridSpec = field(default_factory=lambda: GridSpec.centered(128, 0.25))
    sun: SunConfig = SunConfig(azimuth_deg=135.0, elevation_deg=70.0)
    splat_radius: float = 0.5
    h_min: float = 0.5


@dataclass
class SceneSample:
    """One synthetic scene: GT cloud plus hard-rendered sensor rasters."""

    seed: int
    cloud: PointCloud
    ortho: RgbGrid
    dsm: Grid
    silhouette: Grid
    shadow: Grid
    sun: SunConfig
    spec: GridSpec


def generate_scene(seed: int, cfg: SceneConfig = SceneConfig()) -> SceneSample:
    """Deterministically synthesize one scene from a seed."""
    rng = Rng(seed)
    params = sample_params(rng, cfg.ranges)
    skeleton = grow_skeleton(params, rng)
    cloud = sample_cloud(skeleton, params, rng)
    dsm = render_dsm(cloud, cfg.spec, cfg.splat_radius)
    ortho = render_ortho(cloud, cfg.spec, cfg.splat_radius)
    silhouette = render_silhouette(dsm, cfg.h_min)
    shadow = render_shadow_hard(cloud, cfg.sun, cfg.spec, cfg.splat_radius)
    return SceneSample(
        seed=int(seed),
        cloud=cloud,
        ortho=ortho,
        dsm=dsm,
        silhouette=silhouette,
        shadow=shadow,
        sun=cfg.sun,
        spec=cfg.spec,
    )
