"""Camera math tests: stereo derivation, ray/projection inverses, quad fit."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from nearport.geometry import (
    BehindCamera,
    CameraIntrinsics,
    GeometryError,
    OutOfImage,
    Pose,
    StereoRig,
    project_point,
    quad_for_frustum,
    ray_for_pixel,
    stereo_eye_poses,
)


def rot_y(deg):
    return Rotation.from_euler("y", deg, degrees=True).as_matrix()


class TestStereo:
    def test_identity_head(self):
        left, right = stereo_eye_poses(StereoRig(Pose.identity(), 0.064))
        np.testing.assert_allclose(left.translation, [-0.032, 0, 0], atol=1e-12)
        np.testing.assert_allclose(right.translation, [0.032, 0, 0], atol=1e-12)

    def test_rotated_head_offsets_follow_x_axis(self):
        head = Pose(rot_y(90), np.zeros(3))
        left, right = stereo_eye_poses(StereoRig(head, 0.064))
        # Oracle: rotate the identity-head offsets by the head rotation.
        np.testing.assert_allclose(right.translation, rot_y(90) @ [0.032, 0, 0], atol=1e-12)
        np.testing.assert_allclose(left.translation, rot_y(90) @ [-0.032, 0, 0], atol=1e-12)
        np.testing.assert_allclose(right.translation, [0, 0, -0.032], atol=1e-12)

    def test_zero_ipd_degenerates_to_head(self):
        head = Pose(rot_y(30), [1.0, 2.0, 3.0])
        left, right = stereo_eye_poses(StereoRig(head, 0.0))
        np.testing.assert_allclose(left.translation, head.translation)
        np.testing.assert_allclose(right.translation, head.translation)

    @settings(max_examples=50, deadline=None)
    @given(
        yaw=st.floats(-180, 180),
        pitch=st.floats(-89, 89),
        ipd=st.floats(0.01, 0.19),
        tx=st.floats(-5, 5),
    )
    def test_midpoint_and_separation(self, yaw, pitch, ipd, tx):
        head = Pose(Rotation.from_euler("yx", [yaw, pitch], degrees=True).as_matrix(),
                    [tx, 0.5, -1.0])
        left, right = stereo_eye_poses(StereoRig(head, ipd))
        np.testing.assert_allclose(
            (left.translation + right.translation) / 2, head.translation, atol=1e-12
        )
        assert abs(np.linalg.norm(right.translation - left.translation) - ipd) < 1e-9
        np.testing.assert_allclose(left.rotation, head.rotation)

    def test_ipd_bounds(self):
        with pytest.raises(GeometryError):
            StereoRig(Pose.identity(), 0.3).validate()


class TestRays:
    def test_principal_point_is_optical_axis(self, intrinsics):
        _, d = ray_for_pixel(intrinsics, Pose.identity(), intrinsics.cx, intrinsics.cy)
        np.testing.assert_allclose(d, [0, 0, -1], atol=1e-12)

    def test_one_focal_length_right(self):
        intr = CameraIntrinsics(200, 200, 50.0, 50.0, 100.0, 100.0)
        _, d = ray_for_pixel(intr, Pose.identity(), intr.cx + intr.fx, intr.cy)
        np.testing.assert_allclose(d, np.array([1, 0, -1]) / np.sqrt(2), atol=1e-12)

    def test_directions_are_unit(self, intrinsics):
        rng = np.random.default_rng(3)
        pose = Pose(rot_y(37), [0.3, -0.2, 1.0])
        for _ in range(50):
            u = rng.uniform(0, intrinsics.width_px - 1e-9)
            v = rng.uniform(0, intrinsics.height_px - 1e-9)
            _, d = ray_for_pixel(intrinsics, pose, u, v)
            assert abs(np.linalg.norm(d) - 1.0) < 1e-6

    def test_out_of_image(self, intrinsics):
        with pytest.raises(OutOfImage):
            ray_for_pixel(intrinsics, Pose.identity(), -1.0, 0.0)
        with pytest.raises(OutOfImage):
            ray_for_pixel(intrinsics, Pose.identity(), 0.0, intrinsics.height_px)


class TestProjection:
    def test_on_axis_point(self, intrinsics):
        u, v = project_point(intrinsics, Pose.identity(), (0, 0, -2))
        assert (u, v) == (intrinsics.cx, intrinsics.cy)

    def test_behind_camera(self, intrinsics):
        with pytest.raises(BehindCamera):
            project_point(intrinsics, Pose.identity(), (0, 0, 2))
        with pytest.raises(BehindCamera):
            project_point(intrinsics, Pose.identity(), (0.5, 0, 0))

    def test_project_inverts_ray(self, intrinsics):
        rng = np.random.default_rng(7)
        pose = Pose(Rotation.from_euler("zyx", [10, -40, 25], degrees=True).as_matrix(),
                    [1.0, -0.5, 2.0])
        for _ in range(100):
            u = rng.uniform(0, intrinsics.width_px - 1e-6)
            v = rng.uniform(0, intrinsics.height_px - 1e-6)
            origin, d = ray_for_pixel(intrinsics, pose, u, v)
            u2, v2 = project_point(intrinsics, pose, origin + 3.0 * d)
            assert abs(u2 - u) < 1e-4 and abs(v2 - v) < 1e-4

    @settings(max_examples=100, deadline=None)
    @given(
        fx=st.floats(100, 2000),
        ipd=st.floats(0.05, 0.08),
        depth=st.floats(0.5, 10.0),
    )
    def test_disparity_law(self, fx, ipd, depth):
        intr = CameraIntrinsics(4000, 4000, fx, fx, 2000.0, 2000.0)
        left, right = stereo_eye_poses(StereoRig(Pose.identity(), ipd))
        point = (0.0, 0.0, -depth)
        ul, _ = project_point(intr, left, point)
        ur, _ = project_point(intr, right, point)
        assert abs((ul - ur) - fx * ipd / depth) < 1e-6

    def test_disparity_spec_example(self):
        intr = CameraIntrinsics(4000, 4000, 1000.0, 1000.0, 2000.0, 2000.0)
        left, right = stereo_eye_poses(StereoRig(Pose.identity(), 0.064))
        ul, _ = project_point(intr, left, (0, 0, -2))
        ur, _ = project_point(intr, right, (0, 0, -2))
        assert abs((ul - ur) - 32.0) < 1e-9


class TestFrustumQuad:
    def test_corners_reproject(self):
        intr = CameraIntrinsics(1920, 1080, 1111.0, 1234.0, 700.0, 600.0)
        pose = Pose.identity()
        quad = quad_for_frustum(intr, 2.5)
        expected = [(0, 0), (1920, 0), (1920, 1080), (0, 1080)]
        for corner, (eu, ev) in zip(quad, expected):
            u, v = project_point(intr, pose, corner)
            assert abs(u - eu) < 1e-4 and abs(v - ev) < 1e-4

    def test_full_hd_extents(self):
        intr = CameraIntrinsics(1920, 1080, 1080.0, 1080.0, 960.0, 540.0)
        quad = quad_for_frustum(intr, 1.0)
        width = quad[1][0] - quad[0][0]
        height = quad[0][1] - quad[3][1]
        assert abs(width - 1920 / 1080) < 1e-12
        assert abs(height - 1.0) < 1e-12
        np.testing.assert_allclose(quad[:, 2], -1.0)

    def test_distance_scales_linearly(self, intrinsics):
        q1 = quad_for_frustum(intrinsics, 1.0)
        q2 = quad_for_frustum(intrinsics, 2.0)
        np.testing.assert_allclose(q2, 2.0 * q1, atol=1e-12)

    def test_centered_principal_point_symmetry(self):
        intr = CameraIntrinsics(640, 480, 500.0, 500.0, 320.0, 240.0)
        quad = quad_for_frustum(intr, 1.5)
        np.testing.assert_allclose(quad.mean(axis=0)[:2], [0.0, 0.0], atol=1e-12)

    def test_requires_positive_distance(self, intrinsics):
        with pytest.raises(GeometryError):
            quad_for_frustum(intrinsics, 0.0)


class TestPoseType:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(GeometryError):
            Pose(np.ones((3, 3)), np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(GeometryError):
            Pose(np.diag([-1.0, 1.0, 1.0]), np.zeros(3))

    def test_matrix_roundtrip(self):
        pose = Pose(rot_y(45), [1, 2, 3])
        again = Pose.from_matrix(pose.matrix())
        np.testing.assert_allclose(again.rotation, pose.rotation)
        np.testing.assert_allclose(again.translation, pose.translation)

    def test_orthonormalized_repairs_drift(self):
        noisy = rot_y(30) + 1e-3 * np.random.default_rng(0).standard_normal((3, 3))
        repaired = Pose(noisy, np.zeros(3), check=False).orthonormalized()
        repaired.validate()

    def test_intrinsics_message_conversion(self, intrinsics):
        msg = intrinsics.to_message(1)
        back = CameraIntrinsics.from_message(msg)
        assert back == intrinsics
