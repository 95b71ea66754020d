"""End-to-end reconstruction: targets from inputs, initialization, Adam loop.

Per-scene optimization stands in for a trained network: the combined loss
is minimized directly over the point positions of a fixed-size cloud.
Colors are not optimized; they are assigned from the orthophoto.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Grid, GridSpec, PointCloud, Rng, RgbGrid, SunConfig, world_to_pixel
from .diffrender import SoftConfig, default_soft_config
from .errors import EmptyFootprint, MissingTarget, SpecMismatch
from .losses import H_NORM, LossTargets, LossWeights, combined_loss

EXCESS_GREEN_MIN = 0.05  # vegetation test: 2g - r - b must exceed this


@dataclass
class OptimConfig:
    n_points: int = 2000
    iters: int = 800
    lr: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    soft_cfg: SoftConfig | None = None  # None: default_soft_config(pixel_size)
    seed: int = 0
    h_min: float = 0.5
    h_norm: float = H_NORM
    log_every: int = 50

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass
class ReconResult:
    cloud: PointCloud
    loss_history: list[tuple[int, float, dict[str, float]]]
    final_metrics: dict[str, float] | None = None


def derive_targets(ortho: RgbGrid, dsm: Grid, h_min: float) -> LossTargets:
    """Silhouette and DSM targets from the two real inputs.

    Silhouette = tall (dsm > h_min) AND green (excess-green index > 0.05);
    the greenness test suppresses buildings. The DSM target is masked to
    the silhouette. A shadow target, when available, is attached by the
    caller; real scenes may not have one.
    """
    if ortho.spec != dsm.spec:
        raise SpecMismatch("orthophoto and DSM must share a grid spec")
    r, g, b = ortho.values[..., 0], ortho.values[..., 1], ortho.values[..., 2]
    excess_green = 2.0 * g - r - b
    sil = ((dsm.values > h_min) & (excess_green > EXCESS_GREEN_MIN)).astype(np.float64)
    return LossTargets(
        silhouette=Grid(dsm.spec, sil),
        dsm=Grid(dsm.spec, dsm.values * sil),
    )


def _pixel_lookup(spec: GridSpec, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, v = world_to_pixel(spec, positions[:, 0], positions[:, 1])
    col = np.clip(np.round(u).astype(np.int64), 0, spec.width - 1)
    row = np.clip(np.round(v).astype(np.int64), 0, spec.height - 1)
    return row, col


def _recolor(positions: np.ndarray, ortho: RgbGrid, dsm: Grid) -> np.ndarray:
    """Orthophoto color at each point's pixel, darkened with depth."""
    row, col = _pixel_lookup(ortho.spec, positions)
    base = ortho.values[row, col]
    h = dsm.values[row, col]
    scale = np.where(h > 0, np.sqrt(np.clip(positions[:, 2] / np.maximum(h, 1e-9), 0.0, 1.0)), 1.0)
    return base * scale[:, None]


def init_cloud(
    dsm: Grid, silhouette: Grid, ortho: RgbGrid, n_points: int, rng: Rng
) -> PointCloud:
    """Seed points inside the silhouette footprint, spread through the volume.

    Pixels are chosen proportionally to silhouette mass, (x, y) jittered
    within the pixel, and z drawn uniformly in [0.2 H, H] where H is the
    DSM height there.
    """
    mass = silhouette.values.reshape(-1)
    total = mass.sum()
    if total <= 0:
        raise EmptyFootprint("silhouette has no positive pixels")
    spec = dsm.spec
    flat = rng.choice(spec.n_pixels, size=n_points, p=mass / total)
    row, col = flat // spec.width, flat % spec.width
    ps = spec.pixel_size
    x = spec.origin_x + col * ps + rng.uniform(-0.5, 0.5, n_points) * ps
    y = spec.origin_y + row * ps + rng.uniform(-0.5, 0.5, n_points) * ps
    h = dsm.values.reshape(-1)[flat]
    z = h * rng.uniform(0.2, 1.0, n_points)
    positions = np.stack([x, y, z], axis=1)
    return PointCloud(positions=positions, colors=_recolor(positions, ortho, dsm))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def zeros(shape) -> "AdamState":
        return AdamState(m=np.zeros(shape), v=np.zeros(shape))


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grads: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected Adam update; mutates state, returns new params."""
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


def reconstruct(
    ortho: RgbGrid,
    dsm: Grid,
    sun: SunConfig | None = None,
    shadow_target: Grid | None = None,
    gt_cloud: PointCloud | None = None,
    cfg: OptimConfig | None = None,
    init_positions: np.ndarray | None = None,
) -> ReconResult:
    """Optimize a point cloud against the combined loss with Adam.

    init_positions overrides the silhouette-based initialization (used for
    perturbation studies); z is clamped to >= 0 after every step.
    """
    cfg = cfg or OptimConfig()
    if ortho.spec != dsm.spec:
        raise SpecMismatch("orthophoto and DSM must share a grid spec")
    w = cfg.weights
    if w.lambda_geo > 0 and gt_cloud is None:
        raise MissingTarget("lambda_geo > 0 requires gt_cloud")
    if w.lambda_shadow > 0 and (sun is None or shadow_target is None):
        raise MissingTarget("lambda_shadow > 0 requires sun and shadow_target")

    spec = dsm.spec
    soft_cfg = cfg.soft_cfg or default_soft_config(spec.pixel_size)
    targets = derive_targets(ortho, dsm, cfg.h_min)
    targets.shadow = shadow_target
    targets.gt_cloud = gt_cloud

    rng = Rng(cfg.seed)
    if init_positions is not None:
        positions = np.array(init_positions, dtype=np.float64).reshape(-1, 3)
    else:
        positions = init_cloud(dsm, targets.silhouette, ortho, cfg.n_points, rng).positions
    positions[:, 2] = np.maximum(positions[:, 2], 0.0)

    def loss_at(pos):
        return combined_loss(
            PointCloud(positions=pos), targets, sun, spec, soft_cfg, w, cfg.h_norm
        )

    history: list[tuple[int, float, dict[str, float]]] = []
    value, grad, breakdown = loss_at(positions)
    history.append((0, value, breakdown))

    state = AdamState.zeros(positions.shape)
    for t in range(1, cfg.iters + 1):
        positions = adam_step(
            state, positions, grad.d_positions, cfg.lr,
            cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
        )
        positions[:, 2] = np.maximum(positions[:, 2], 0.0)
        value, grad, breakdown = loss_at(positions)
        if t % cfg.log_every == 0 or t == cfg.iters:
            history.append((t, value, breakdown))

    cloud = PointCloud(positions=positions, colors=_recolor(positions, ortho, dsm))
    return ReconResult(cloud=cloud, loss_history=history)
