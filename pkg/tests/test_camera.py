import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_camera, random_rotation, rot_z
from tview.camera import (
    EPS_DEPTH,
    Camera,
    para_perspective_at,
    project_perspective,
    world_to_camera,
)
from tview.errors import DegenerateAnchor, PointBehindCamera


@pytest.mark.parametrize("R, t, x, expected", [
    (np.eye(3), (0, 0, 0), (1, 2, 3), (1, 2, 3)),
    (np.eye(3), (0, 0, -5), (0, 0, 5), (0, 0, 0)),
    (rot_z(np.pi / 2), (0, 0, 0), (1, 0, 0), (0, 1, 0)),
])
def test_world_to_camera(R, t, x, expected):
    cam = make_camera(R=R, t=t)
    np.testing.assert_allclose(world_to_camera(cam, x), expected, atol=1e-15)


def test_world_to_camera_matches_matrix_product(rng):
    R = random_rotation(rng)
    t = rng.standard_normal(3)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(world_to_camera(make_camera(R=R, t=t), x), R @ x + t, rtol=1e-14)


def test_projection_examples():
    np.testing.assert_allclose(project_perspective(make_camera(), (1, 1, 2)), (0.5, 0.5))
    cam = make_camera(f=1000.0, pp=(500.0, 500.0))
    np.testing.assert_allclose(project_perspective(cam, (0, 0, 4)), (500, 500))


@pytest.mark.parametrize("x", [(0, 0, -1), (0, 0, 0), (1, 1, EPS_DEPTH)])
def test_point_behind_camera(x):
    with pytest.raises(PointBehindCamera):
        project_perspective(make_camera(), x)


def test_projection_matrix_is_K_R_t(rng):
    R, t = random_rotation(rng), rng.standard_normal(3)
    cam = make_camera(R=R, t=t, f=300.0, pp=(128.0, 96.0))
    np.testing.assert_array_equal(cam.projection_matrix(), cam.intrinsics @ np.hstack([R, t[:, None]]))
    x = rng.standard_normal(3) + (0, 0, 20)
    h = cam.projection_matrix() @ np.append(x, 1.0)
    if h[2] > 0:
        np.testing.assert_allclose(h[:2] / h[2], project_perspective(cam, x), rtol=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(R=np.diag([1.0, 1.0, -1.0])),
    dict(R=2 * np.eye(3)),
    dict(f=-1.0),
    dict(f=0.0),
])
def test_camera_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        make_camera(**kwargs)


def test_camera_rejects_skew():
    with pytest.raises(ValueError):
        Camera("c", [[1, 0.1, 0], [0, 1, 0], [0, 0, 1]], np.eye(3), np.zeros(3))


def test_camera_arrays_read_only(unit_cam):
    with pytest.raises(ValueError):
        unit_cam.rotation[0, 0] = 2.0


def test_look_at_points_axis_at_target():
    cam = Camera.look_at("c", (4, 0, 1), (0, 0, 1), 280.0, (128, 128))
    np.testing.assert_allclose(cam.center, (4, 0, 1), atol=1e-12)
    np.testing.assert_allclose(cam.optical_axis, (-1, 0, 0), atol=1e-12)
    np.testing.assert_allclose(project_perspective(cam, (0, 0, 1)), (128, 128), atol=1e-9)
    # world up projects above the principal point (image y grows downwards)
    assert project_perspective(cam, (0, 0, 1.5))[1] < 128


class TestParaPerspective:
    def test_identity_at_unit_depth(self, unit_cam):
        m = para_perspective_at(unit_cam, (0, 0, 1))
        np.testing.assert_allclose(m.A, [[1, 0, 0], [0, 1, 0]])
        np.testing.assert_allclose(m((0, 0, 1)), (0, 0))

    def test_scales_by_anchor_norm(self, unit_cam):
        m = para_perspective_at(unit_cam, (0, 0, 2))
        np.testing.assert_allclose(m((1, 1, 2)), (0.5, 0.5))

    def test_off_axis_anchor_uses_norm(self, unit_cam):
        m = para_perspective_at(unit_cam, (3, 0, 4))
        np.testing.assert_allclose(m((3, 0, 4)), (0.6, 0.0), atol=1e-15)
        np.testing.assert_allclose(project_perspective(unit_cam, (3, 0, 4)), (0.75, 0.0))

    def test_tangent_mode_hits_pinhole_image(self, unit_cam):
        m = para_perspective_at(unit_cam, (3, 0, 4), mode="tangent")
        np.testing.assert_allclose(m((3, 0, 4)), (0.75, 0.0), atol=1e-15)

    def test_degenerate_anchor(self, unit_cam):
        with pytest.raises(DegenerateAnchor):
            para_perspective_at(unit_cam, (0, 0, 0))
        with pytest.raises(DegenerateAnchor):
            para_perspective_at(unit_cam, (1, 0, 0), mode="tangent")

    def test_unknown_mode(self, unit_cam):
        with pytest.raises(ValueError):
            para_perspective_at(unit_cam, (0, 0, 1), mode="weak")

    @pytest.mark.parametrize("mode", ["norm", "tangent"])
    def test_exact_on_principal_axis(self, rng, mode):
        R, c = random_rotation(rng), rng.standard_normal(3)
        cam = make_camera(R=R, t=-R @ c, f=250.0, pp=(100.0, 80.0))
        mu = c + 3.7 * cam.optical_axis
        np.testing.assert_allclose(para_perspective_at(cam, mu, mode)(mu), project_perspective(cam, mu), atol=1e-12)

    @pytest.mark.parametrize("mode, anchor", [
        ("norm", (0.0, 0.0, 5.0)),
        ("tangent", (0.0, 0.0, 5.0)),
        ("tangent", (1.5, -0.8, 4.0)),
    ])
    def test_first_order_agreement(self, rng, mode, anchor):
        cam = make_camera(f=200.0, pp=(64.0, 64.0))
        m = para_perspective_at(cam, anchor, mode)
        for _ in range(5):
            d = rng.standard_normal(3)
            d *= 0.2 / np.linalg.norm(d)
            e1 = np.linalg.norm(m(anchor + d) - project_perspective(cam, anchor + d))
            e2 = np.linalg.norm(m(anchor + d / 2) - project_perspective(cam, anchor + d / 2))
            assert e1 / e2 == pytest.approx(4.0, rel=0.2)

    def test_norm_mode_off_axis_is_not_first_order(self):
        # the anchor itself is already misplaced, so errors stay O(1)
        cam = make_camera()
        m = para_perspective_at(cam, (3, 0, 4))
        e = np.linalg.norm(m((3, 0, 4)) - project_perspective(cam, (3, 0, 4)))
        assert e == pytest.approx(0.15)

    @settings(max_examples=50, deadline=None)
    @given(alpha=st.floats(0, 1), seed=st.integers(0, 2**32 - 1), mode=st.sampled_from(["norm", "tangent"]))
    def test_affine(self, alpha, seed, mode):
        r = np.random.default_rng(seed)
        cam = make_camera(R=random_rotation(r), t=(0, 0, 6), f=300.0, pp=(128, 128))
        m = para_perspective_at(cam, r.standard_normal(3), mode)
        x, y = r.standard_normal(3), r.standard_normal(3)
        np.testing.assert_allclose(m(alpha * x + (1 - alpha) * y), alpha * m(x) + (1 - alpha) * m(y), atol=1e-12 * 300)
