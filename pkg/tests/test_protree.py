import numpy as np
import pytest

from treerecon.core import CLASS_FOLIAGE, CLASS_TRUNK, Rng
from treerecon.errors import InvalidConfig
from treerecon.losses import chamfer
from treerecon.protree import (
    SceneConfig,
    TreeParamRanges,
    TreeParams,
    generate_scene,
    grow_skeleton,
    sample_cloud,
    sample_params,
)


def fixed_params(**overrides) -> TreeParams:
    base = dict(
        trunk_height=8.0,
        trunk_radius=0.3,
        branch_depth=2,
        children_per_branch=(2, 2),
        length_decay=0.7,
        radius_decay=0.6,
        branch_angle_deg=(30.0, 30.0),
        crown_radius=2.0,
        foliage_fraction=0.8,
        n_points=500,
    )
    base.update(overrides)
    return TreeParams(**base)


class TestSampleParams:
    def test_degenerate_ranges_give_exact_values(self):
        ranges = TreeParamRanges(
            trunk_height=(5.0, 5.0),
            trunk_radius=(0.2, 0.2),
            branch_depth=(3, 3),
            children_per_branch=(2, 2),
            length_decay=(0.7, 0.7),
            radius_decay=(0.6, 0.6),
            branch_angle_deg=(25.0, 25.0),
            crown_radius=(2.0, 2.0),
            foliage_fraction=(0.8, 0.8),
            n_points=(100, 100),
        )
        p = sample_params(Rng(0), ranges)
        assert p.trunk_height == 5.0
        assert p.branch_depth == 3
        assert p.length_decay == 0.7
        assert p.n_points == 100

    def test_same_seed_same_params(self):
        ranges = TreeParamRanges()
        assert sample_params(Rng(9), ranges) == sample_params(Rng(9), ranges)

    def test_trunk_height_mean(self):
        # uniform [4, 12]: mean 8, sd 8/sqrt(12); 1e4 draws
        ranges = TreeParamRanges(trunk_height=(4.0, 12.0))
        rng = Rng(7)
        draws = np.array(
            [sample_params(rng, ranges).trunk_height for _ in range(10_000)]
        )
        sigma_mean = (8.0 / np.sqrt(12.0)) / 100.0
        assert abs(draws.mean() - 8.0) < 3 * sigma_mean

    def test_empty_range_rejected(self):
        with pytest.raises(InvalidConfig):
            TreeParamRanges(trunk_height=(10.0, 4.0))


class TestGrowSkeleton:
    def test_depth_zero_is_single_trunk(self):
        sk = grow_skeleton(fixed_params(branch_depth=0), Rng(0))
        assert len(sk) == 1
        np.testing.assert_array_equal(sk.starts[0], [0, 0, 0])
        np.testing.assert_array_equal(sk.ends[0], [0, 0, 8.0])

    def test_depth_one_three_children(self):
        sk = grow_skeleton(
            fixed_params(branch_depth=1, children_per_branch=(3, 3)), Rng(0)
        )
        assert len(sk) == 4

    def test_depth_two_geometric_sum(self):
        sk = grow_skeleton(
            fixed_params(branch_depth=2, children_per_branch=(2, 2)), Rng(0)
        )
        assert len(sk) == 1 + 2 + 4

    def test_connectivity(self):
        sk = grow_skeleton(fixed_params(branch_depth=3), Rng(3))
        for i in range(1, len(sk)):
            parent = sk.parents[i]
            assert np.linalg.norm(sk.starts[i] - sk.ends[parent]) < 1e-9

    def test_radii_strictly_decrease(self):
        sk = grow_skeleton(fixed_params(branch_depth=3), Rng(3))
        for i in range(1, len(sk)):
            assert sk.radii[i] < sk.radii[sk.parents[i]]


class TestSampleCloud:
    def test_point_budget_and_attributes(self):
        params = fixed_params(n_points=100)
        cloud = sample_cloud(grow_skeleton(params, Rng(1)), params, Rng(2))
        assert len(cloud) == 100
        assert cloud.colors is not None and cloud.classes is not None

    def test_all_trunk_when_no_foliage(self):
        params = fixed_params(foliage_fraction=0.0, n_points=300)
        sk = grow_skeleton(params, Rng(1))
        cloud = sample_cloud(sk, params, Rng(2))
        assert np.all(cloud.classes == CLASS_TRUNK)
        # each point lies on some segment's lateral surface
        for p in cloud.positions:
            d_min = np.inf
            for s, e, r in zip(sk.starts, sk.ends, sk.radii):
                axis = e - s
                t = np.clip(np.dot(p - s, axis) / np.dot(axis, axis), 0, 1)
                radial = np.linalg.norm(p - (s + t * axis))
                d_min = min(d_min, radial - r)
            assert d_min <= 1e-9

    def test_all_foliage_in_crown_sphere(self):
        params = fixed_params(
            foliage_fraction=1.0, branch_depth=0, crown_radius=2.0, n_points=400
        )
        sk = grow_skeleton(params, Rng(1))
        cloud = sample_cloud(sk, params, Rng(2))
        assert np.all(cloud.classes == CLASS_FOLIAGE)
        tip = sk.ends[0]
        # ground clamping can only decrease distance in z
        unclamped = np.linalg.norm(cloud.positions[:, :2] - tip[:2], axis=1)
        assert np.all(unclamped <= params.crown_radius + 1e-9)
        assert np.all(cloud.positions[:, 2] >= 0)

    def test_budget_exact_for_odd_fractions(self):
        for frac in (0.13, 0.5, 0.77, 0.999):
            params = fixed_params(foliage_fraction=frac, n_points=251)
            cloud = sample_cloud(grow_skeleton(params, Rng(1)), params, Rng(2))
            assert len(cloud) == 251


class TestGenerateScene:
    def test_deterministic(self):
        a = generate_scene(11)
        b = generate_scene(11)
        np.testing.assert_array_equal(a.cloud.positions, b.cloud.positions)
        np.testing.assert_array_equal(a.dsm.values, b.dsm.values)
        np.testing.assert_array_equal(a.ortho.values, b.ortho.values)
        np.testing.assert_array_equal(a.shadow.values, b.shadow.values)

    def test_adjacent_seeds_differ(self):
        a = generate_scene(11)
        b = generate_scene(12)
        value, _ = chamfer(a.cloud, b.cloud)
        assert value > 0

    def test_nonempty_cloud_guaranteed(self):
        cfg = SceneConfig(ranges=TreeParamRanges(n_points=(1, 1)))
        assert len(generate_scene(0, cfg).cloud) == 1
