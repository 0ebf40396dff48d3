import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_camera, random_rotation
from tview.camera import Camera, project_perspective
from tview.errors import DehomogenizationFailure, InsufficientViews
from tview.triangulation import DEGENERATE_RATIO, MAX_VIEWS, Heatmap, soft_argmax, triangulate_dlt


class TestSoftArgmax:
    def test_uniform(self):
        np.testing.assert_allclose(soft_argmax(Heatmap(np.zeros((3, 3)))), (1, 1), atol=1e-12)

    def test_one_hot(self):
        v = np.zeros((8, 10))
        v[4, 7] = 50.0
        np.testing.assert_allclose(soft_argmax(Heatmap(v)), (4, 7), atol=1e-9)

    def test_two_peaks(self):
        v = np.full((3, 3), -1e3)
        v[0, 0] = v[2, 2] = 0.0
        np.testing.assert_allclose(soft_argmax(Heatmap(v)), (1, 1), atol=1e-9)

    def test_rectangular_axes(self):
        # i indexes width (x), j indexes height (y)
        v = np.full((5, 2), -1e3)
        v[3, 1] = 0.0
        np.testing.assert_allclose(soft_argmax(Heatmap(v)), (3, 1), atol=1e-9)

    def test_temperature(self):
        v = np.zeros((5, 5))
        v[4, 0] = 1.0
        hot, cold = soft_argmax(Heatmap(v), 100.0), soft_argmax(Heatmap(v), 0.01)
        np.testing.assert_allclose(cold, (4, 0), atol=1e-9)
        assert np.linalg.norm(hot - (2, 2)) < 0.05

    def test_overflow_safe(self):
        v = np.zeros((4, 4))
        v[1, 2] = 1e308
        np.testing.assert_allclose(soft_argmax(Heatmap(v)), (1, 2))

    @pytest.mark.parametrize("values", [np.zeros((0, 3)), np.zeros(3), np.array([[np.nan]])])
    def test_invalid_heatmap(self, values):
        with pytest.raises(ValueError):
            Heatmap(values)

    def test_invalid_temperature(self):
        with pytest.raises(ValueError):
            soft_argmax(Heatmap(np.zeros((2, 2))), 0.0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7)),
                  elements=st.floats(-1e3, 1e3)))
    def test_inside_grid(self, v):
        p = soft_argmax(Heatmap(v))
        assert 0 <= p[0] <= v.shape[0] - 1 and 0 <= p[1] <= v.shape[1] - 1


class TestDlt:
    def test_two_view_example(self):
        c0, c1 = make_camera(), make_camera(t=(-1, 0, 0))
        res = triangulate_dlt([(c0, (0.0, 0.0)), (c1, (-0.2, 0.0))])
        np.testing.assert_allclose(res.point, (0, 0, 5), atol=1e-9)
        for cam in (c0, c1):
            reproj = project_perspective(cam, res.point)
            assert np.linalg.norm(reproj - project_perspective(cam, (0, 0, 5))) < 1e-9
        assert not res.degenerate

    def test_four_views_exact(self, ring_cams, rng):
        for _ in range(20):
            x = rng.uniform(-1, 1, 3) + (0, 0, 1)
            res = triangulate_dlt([(c, project_perspective(c, x)) for c in ring_cams])
            np.testing.assert_allclose(res.point, x, atol=1e-9)
            assert max(np.linalg.norm(project_perspective(c, res.point) - project_perspective(c, x)) for c in ring_cams) < 1e-7

    def test_weights_do_not_change_exact_solution(self, ring_cams):
        x = np.array([0.3, -0.2, 1.4])
        obs = [(c, project_perspective(c, x)) for c in ring_cams]
        np.testing.assert_allclose(triangulate_dlt(obs, weights=[1, 2, 0.5, 3]).point, x, atol=1e-9)

    def test_weight_zero_drops_view(self, ring_cams):
        x = np.array([0.3, -0.2, 1.4])
        obs = [(c, project_perspective(c, x)) for c in ring_cams]
        obs[0] = (obs[0][0], obs[0][1] + 30.0)
        np.testing.assert_allclose(triangulate_dlt(obs, weights=[0, 1, 1, 1]).point, x, atol=1e-9)

    def test_insufficient(self, unit_cam):
        with pytest.raises(InsufficientViews):
            triangulate_dlt([(unit_cam, (0, 0))])

    def test_too_many_views(self, unit_cam):
        with pytest.raises(ValueError):
            triangulate_dlt([(unit_cam, (0, 0))] * (MAX_VIEWS + 1))

    def test_non_finite(self, unit_cam):
        with pytest.raises(ValueError):
            triangulate_dlt([(unit_cam, (0, np.nan)), (make_camera(t=(-1, 0, 0)), (0, 0))])

    def test_antipodal_on_axis_is_flagged(self):
        a = Camera.look_at("a", (4, 0, 1), (0, 0, 1), 280.0, (128, 128))
        b = Camera.look_at("b", (-4, 0, 1), (0, 0, 1), 280.0, (128, 128))
        x = np.array([0.5, 0.0, 1.0])
        try:
            res = triangulate_dlt([(a, project_perspective(a, x)), (b, project_perspective(b, x))])
        except DehomogenizationFailure:
            return
        assert res.condition_ratio < DEGENERATE_RATIO
        assert res.degenerate

    def test_coincident_rays_report_unit_ratio(self, unit_cam):
        res = triangulate_dlt([(unit_cam, (0.1, 0.2)), (unit_cam, (0.1, 0.2))])
        assert res.condition_ratio == pytest.approx(1.0)

    def test_point_at_infinity(self):
        # parallel rays from two offset cameras
        c0, c1 = make_camera(), make_camera(t=(-1, 0, 0))
        with pytest.raises(DehomogenizationFailure):
            triangulate_dlt([(c0, (0.0, 0.0)), (c1, (0.0, 0.0))])

    def test_equivariance(self, ring_cams, rng):
        R, t = random_rotation(rng), rng.standard_normal(3)
        x = np.array([0.2, 0.1, 0.9])
        moved = [Camera(c.id, c.intrinsics, c.rotation @ R.T, c.translation - c.rotation @ R.T @ t) for c in ring_cams]
        y = R @ x + t
        res = triangulate_dlt([(c, project_perspective(c, y)) for c in moved])
        np.testing.assert_allclose(res.point, y, atol=1e-8)

    def test_conditioning_degrades_towards_antipodal(self):
        x = np.array([0.0, 0.0, 1.0])
        target = x + (0.3, 0.0, 0.0)
        a = Camera.look_at("a", (4, 0, 1), target, 280.0, (128, 128))
        ratios = []
        for deg in np.linspace(90, 178, 12):
            th = np.radians(deg)
            b = Camera.look_at("b", (4 * np.cos(th), 4 * np.sin(th), 1), target, 280.0, (128, 128))
            ratios.append(triangulate_dlt([(a, project_perspective(a, target)), (b, project_perspective(b, target))]).condition_ratio)
        assert all(r1 > r2 for r1, r2 in zip(ratios, ratios[1:]))
