"""Finite-difference verification of every analytic gradient path.

Central differences with step h = 1e-4 * sigma are compared per component
against the backward passes of the soft renderers, Chamfer, and the
combined loss. Components whose perturbation window straddles a kernel
truncation boundary or a nearest-neighbor tie are skipped: the objective
is non-smooth exactly there, so finite differences are meaningless (the
same exclusion a Chamfer check needs away from tie points).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import Grid, GridSpec, PointCloud, Rng, SunConfig
from .diffrender import (
    SoftConfig,
    project_to_ground,
    soft_dsm,
    soft_dsm_backward,
    soft_shadow,
    soft_shadow_backward,
    soft_silhouette,
    soft_silhouette_backward,
)
from .losses import LossTargets, LossWeights, chamfer, combined_loss

REL_TOL = 1e-3
ABS_FLOOR = 1e-8
_REF_FLOOR = ABS_FLOOR / REL_TOL  # err <= max(REL*|g|, ABS)  <=>  err <= REL*max(|g|, this)
_MARGIN = 20.0  # boundary exclusion margin, in units of the FD step


def fd_gradient(f, positions: np.ndarray, h: float, mask: np.ndarray) -> np.ndarray:
    """Central finite differences of scalar f over unmasked components."""
    grad = np.zeros_like(positions)
    for i in range(positions.shape[0]):
        for j in range(3):
            if not mask[i, j]:
                continue
            p = positions.copy()
            p[i, j] += h
            hi = f(p)
            p[i, j] -= 2 * h
            lo = f(p)
            grad[i, j] = (hi - lo) / (2 * h)
    return grad


def max_error_score(analytic, fd, mask) -> float:
    """Max over components of |analytic - fd| / max(|fd|, floor); pass <= REL_TOL."""
    err = np.abs(analytic - fd)
    ref = np.maximum(np.abs(fd), _REF_FLOOR)
    score = np.where(mask, err / ref, 0.0)
    return float(score.max()) if score.size else 0.0


def _truncation_safe(xy: np.ndarray, spec: GridSpec, cfg: SoftConfig, slack: float) -> np.ndarray:
    """True per point when no in-grid pixel center sits within `slack` of the cutoff."""
    cutoff = cfg.trunc * cfg.sigma
    xs, ys = spec.pixel_centers()
    safe = np.ones(len(xy), dtype=bool)
    r = cutoff + slack + spec.pixel_size
    for i, (x, y) in enumerate(xy):
        cx = xs[np.abs(xs - x) <= r]
        cy = ys[np.abs(ys - y) <= r]
        if len(cx) == 0 or len(cy) == 0:
            continue
        d = np.sqrt((x - cx[:, None]) ** 2 + (y - cy[None, :]) ** 2)
        if np.any(np.abs(d - cutoff) < slack):
            safe[i] = False
    return safe


def silhouette_mask(cloud, spec, cfg, h) -> np.ndarray:
    """Components safe to finite-difference for silhouette/DSM renders.

    z never crosses the (xy) truncation boundary, so only x and y are
    ever excluded.
    """
    safe = _truncation_safe(cloud.positions[:, :2], spec, cfg, _MARGIN * h)
    mask = np.ones((len(cloud), 3), dtype=bool)
    mask[:, 0] = safe
    mask[:, 1] = safe
    return mask


def shadow_mask(cloud, sun, spec, cfg, h) -> np.ndarray:
    """Safe components for the shadow render; z moves the projection too."""
    xy, jac = project_to_ground(cloud, sun)
    k = np.hypot(jac[0, 2], jac[1, 2])  # projected displacement per meter of z
    safe_xy = _truncation_safe(xy, spec, cfg, _MARGIN * h)
    safe_z = _truncation_safe(xy, spec, cfg, _MARGIN * h * max(1.0, k))
    return np.stack([safe_xy, safe_xy, safe_z], axis=1)


def chamfer_mask(cloud, gt, h) -> np.ndarray:
    """Exclude points whose nearest-neighbor assignment could flip within h."""
    pa, pb = cloud.positions, gt.positions
    mask = np.ones((len(pa), 3), dtype=bool)

    if len(pb) >= 2:
        d, _ = cKDTree(pb).query(pa, k=2)
        gap = d[:, 1] ** 2 - d[:, 0] ** 2
        tied = gap < _MARGIN * h * (d[:, 0] + d[:, 1] + 1.0)
        mask[tied] = False
    if len(pa) >= 2:
        d, idx = cKDTree(pa).query(pb, k=2)
        gap = d[:, 1] ** 2 - d[:, 0] ** 2
        tied = gap < _MARGIN * h * (d[:, 0] + d[:, 1] + 1.0)
        mask[idx[tied].ravel()] = False
    return mask


def _random_pixel_grad(spec: GridSpec, rng: Rng) -> Grid:
    return Grid(spec, rng.normal(size=(spec.height, spec.width)) / spec.n_pixels)


@dataclass
class GradCheckResult:
    max_scores: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(s <= REL_TOL for s in self.max_scores.values())

    def record(self, name: str, score: float):
        self.max_scores[name] = max(self.max_scores.get(name, 0.0), score)


def run_gradcheck(
    seed: int = 0,
    trials: int = 100,
    n_points: int | None = None,
    corrupt: float = 0.0,
) -> GradCheckResult:
    """Run the full finite-difference suite over random configurations.

    `corrupt` (test hook) offsets every analytic gradient to verify that
    the check actually fails on wrong gradients.
    """
    rng = Rng(seed)
    result = GradCheckResult()
    spec = GridSpec.centered(20, 0.5)

    for _ in range(trials):
        n = int(n_points) if n_points else int(rng.integers(20, 50))
        positions = np.stack(
            [
                rng.uniform(-4.0, 4.0, n),
                rng.uniform(-4.0, 4.0, n),
                rng.uniform(0.0, 4.0, n),
            ],
            axis=1,
        )
        cfg = SoftConfig(
            sigma=float(rng.uniform(0.7, 1.5)) * spec.pixel_size,
            alpha=float(rng.uniform(0.5, 0.95)),
            beta=float(rng.uniform(0.5, 3.0)),
        )
        sun = SunConfig(
            azimuth_deg=float(rng.uniform(0.0, 360.0)),
            elevation_deg=float(rng.uniform(20.0, 90.0)),
        )
        h = 1e-4 * cfg.sigma
        d_pix = _random_pixel_grad(spec, rng)
        gt = PointCloud(
            positions=np.stack(
                [
                    rng.uniform(-4.0, 4.0, n),
                    rng.uniform(-4.0, 4.0, n),
                    rng.uniform(0.0, 4.0, n),
                ],
                axis=1,
            )
        )
        cloud = PointCloud(positions=positions)

        def check(name, scalar_fn, analytic, mask):
            fd = fd_gradient(scalar_fn, positions, h, mask)
            result.record(name, max_error_score(analytic + corrupt, fd, mask))

        mask_sil = silhouette_mask(cloud, spec, cfg, h)
        check(
            "silhouette",
            lambda p: float(
                (soft_silhouette(PointCloud(p), spec, cfg).values * d_pix.values).sum()
            ),
            soft_silhouette_backward(cloud, spec, cfg, d_pix).d_positions,
            mask_sil,
        )
        check(
            "dsm",
            lambda p: float(
                (soft_dsm(PointCloud(p), spec, cfg).values * d_pix.values).sum()
            ),
            soft_dsm_backward(cloud, spec, cfg, d_pix).d_positions,
            mask_sil,
        )
        mask_sh = shadow_mask(cloud, sun, spec, cfg, h)
        check(
            "shadow",
            lambda p: float(
                (soft_shadow(PointCloud(p), sun, spec, cfg).values * d_pix.values).sum()
            ),
            soft_shadow_backward(cloud, sun, spec, cfg, d_pix).d_positions,
            mask_sh,
        )
        mask_ch = chamfer_mask(cloud, gt, h)
        check(
            "chamfer",
            lambda p: chamfer(PointCloud(p), gt)[0],
            chamfer(cloud, gt)[1].d_positions,
            mask_ch,
        )

        targets = LossTargets(
            silhouette=Grid(spec, (rng.random((spec.height, spec.width)) > 0.7).astype(float)),
            shadow=Grid(spec, (rng.random((spec.height, spec.width)) > 0.7).astype(float)),
            dsm=Grid(spec, rng.uniform(0.0, 4.0, (spec.height, spec.width))),
            gt_cloud=gt,
        )
        weights = LossWeights()
        _, grad, _ = combined_loss(cloud, targets, sun, spec, cfg, weights)
        check(
            "combined",
            lambda p: combined_loss(
                PointCloud(p), targets, sun, spec, cfg, weights
            )[0],
            grad.d_positions,
            mask_sil & mask_sh & mask_ch,
        )

    return result
