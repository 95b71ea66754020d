import numpy as np
import pytest

from treerecon.core import GridSpec, PointCloud, SunConfig
from treerecon.errors import MissingColors
from treerecon.sensor import (
    GROUND_COLOR,
    render_dsm,
    render_ortho,
    render_shadow_hard,
    render_silhouette,
)

SPEC = GridSpec(21, 21, -10.0, -10.0, 1.0)  # pixel centers at integers


def cloud_at(points, colors=None):
    return PointCloud(positions=np.array(points, dtype=float), colors=colors)


class TestRenderDsm:
    def test_uncovered_pixel_is_ground(self):
        dsm = render_dsm(cloud_at([[0, 0, 7]]), SPEC, 0.4)
        assert dsm.values[0, 0] == 0.0

    def test_single_point(self):
        dsm = render_dsm(cloud_at([[0, 0, 7]]), SPEC, 0.4)
        assert dsm.values[10, 10] == 7.0

    def test_max_semantics(self):
        dsm = render_dsm(cloud_at([[0, 0, 3], [0, 0, 9]]), SPEC, 0.4)
        assert dsm.values[10, 10] == 9.0

    def test_adding_point_never_decreases(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-8, 8, (50, 3))
        pts[:, 2] = rng.uniform(0, 10, 50)
        before = render_dsm(cloud_at(pts), SPEC, 0.6).values
        after = render_dsm(cloud_at(np.vstack([pts, [[1, 1, 5]]])), SPEC, 0.6).values
        assert np.all(after >= before)


class TestRenderOrtho:
    def test_uncovered_is_ground_color(self):
        ortho = render_ortho(cloud_at([[0, 0, 5]], [[0, 1, 0]]), SPEC, 0.4)
        np.testing.assert_allclose(ortho.values[0, 0], GROUND_COLOR)

    def test_single_point_color(self):
        ortho = render_ortho(cloud_at([[0, 0, 5]], [[0, 1, 0]]), SPEC, 0.4)
        np.testing.assert_allclose(ortho.values[10, 10], [0, 1, 0])

    def test_highest_wins(self):
        ortho = render_ortho(
            cloud_at([[0, 0, 3], [0, 0, 9]], [[0.5, 0.3, 0.1], [0, 1, 0]]), SPEC, 0.4
        )
        np.testing.assert_allclose(ortho.values[10, 10], [0, 1, 0])

    def test_tie_broken_by_larger_index(self):
        ortho = render_ortho(
            cloud_at([[0, 0, 5], [0, 0, 5]], [[1, 0, 0], [0, 0, 1]]), SPEC, 0.4
        )
        np.testing.assert_allclose(ortho.values[10, 10], [0, 0, 1])

    def test_missing_colors_rejected(self):
        with pytest.raises(MissingColors):
            render_ortho(cloud_at([[0, 0, 5]]), SPEC, 0.4)


class TestRenderSilhouette:
    def test_all_zero(self):
        from treerecon.core import Grid

        sil = render_silhouette(Grid.zeros(SPEC), 0.5)
        assert not sil.values.any()

    def test_threshold_and_strict_boundary(self):
        from treerecon.core import Grid

        g = Grid.zeros(SPEC)
        g.values[0, 0] = 5.0
        g.values[0, 1] = 0.5
        sil = render_silhouette(g, 0.5)
        assert sil.values[0, 0] == 1.0
        assert sil.values[0, 1] == 0.0  # strict inequality at the boundary

    def test_silhouette_subset_of_dsm_footprint(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-8, 8, (80, 3))
        pts[:, 2] = rng.uniform(0, 12, 80)
        dsm = render_dsm(cloud_at(pts), SPEC, 0.5)
        sil = render_silhouette(dsm, 0.5)
        assert np.all(dsm.values[sil.values == 1.0] > 0.5)


class TestRenderShadowHard:
    def test_projection_east_45(self):
        shadow = render_shadow_hard(
            cloud_at([[0, 0, 10]]), SunConfig(90.0, 45.0), SPEC, 0.4
        )
        assert shadow.values[10, 0] == 1.0  # world (-10, 0)
        assert shadow.values[10, 10] == 0.0

    def test_zenith_shadow_underfoot(self):
        shadow = render_shadow_hard(
            cloud_at([[0, 0, 10]]), SunConfig(0.0, 90.0), SPEC, 0.4
        )
        assert shadow.values[10, 10] == 1.0

    def test_ground_point_shadows_in_place(self):
        for az, el in [(0, 30), (123, 47), (290, 80)]:
            shadow = render_shadow_hard(
                cloud_at([[2, 3, 0]]), SunConfig(az, el), SPEC, 0.4
            )
            assert shadow.values[13, 12] == 1.0

    def test_zenith_matches_silhouette_of_dsm(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-8, 8, (60, 3))
        pts[:, 2] = rng.uniform(0.1, 12, 60)
        cloud = cloud_at(pts)
        shadow = render_shadow_hard(cloud, SunConfig(0.0, 90.0), SPEC, 0.5)
        sil = render_silhouette(render_dsm(cloud, SPEC, 0.5), 0.0)
        np.testing.assert_array_equal(shadow.values, sil.values)
