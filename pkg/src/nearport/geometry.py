"""Pinhole camera math, stereo rig derivation, frustum-aligned quad placement.

Conventions (fixed for the whole system):
  * camera-to-world poses; camera looks along -Z, +Y up, +X right
  * image u to the right, v DOWN; the -(v-cy)/fy term maps v into +Y-up space
  * right-handed world, translations in meters

All functions are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .protocol import IntrinsicsMessage


class GeometryError(ValueError):
    pass


class OutOfImage(GeometryError):
    """Pixel coordinates fall outside the image bounds."""


class BehindCamera(GeometryError):
    """Point has non-negative depth in the camera frame (z_cam >= 0)."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; value-convertible to/from IntrinsicsMessage."""

    width_px: int
    height_px: int
    fx: float
    fy: float
    cx: float
    cy: float

    def validate(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise GeometryError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width_px and 0 <= self.cy < self.height_px):
            raise GeometryError("principal point outside image")

    def to_message(self, viewpoint_label: int) -> IntrinsicsMessage:
        return IntrinsicsMessage(
            viewpoint_label, self.width_px, self.height_px, self.fx, self.fy, self.cx, self.cy
        )

    @classmethod
    def from_message(cls, msg: IntrinsicsMessage) -> "CameraIntrinsics":
        return cls(msg.width_px, msg.height_px, msg.fx, msg.fy, msg.cx, msg.cy)


class Pose:
    """Rigid camera-to-world transform (3x3 rotation + translation, meters)."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation, check: bool = True):
        self.rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(translation, dtype=np.float64).reshape(3)
        if check:
            self.validate()

    def validate(self) -> None:
        r = self.rotation
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            raise GeometryError("pose contains non-finite values")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise GeometryError("rotation must have det +1")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3), check=False)

    @classmethod
    def from_matrix(cls, m, check: bool = True) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise GeometryError(f"expected 4x4 matrix, got {m.shape}")
        if check and not np.allclose(m[3], [0, 0, 0, 1], atol=1e-6):
            raise GeometryError(f"bottom row must be (0,0,0,1), got {m[3]}")
        return cls(m[:3, :3], m[:3, 3], check=check)

    @classmethod
    def from_quaternion(cls, qx: float, qy: float, qz: float, qw: float, translation) -> "Pose":
        rot = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
        return cls(rot, translation, check=False)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def orthonormalized(self) -> "Pose":
        """Project the rotation back onto SO(3) (nearest by Frobenius norm)."""
        u, _, vt = np.linalg.svd(self.rotation)
        r = u @ vt
        if np.linalg.det(r) < 0:
            r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        return Pose(r, self.translation, check=False)

    def __repr__(self) -> str:
        return f"Pose(t={self.translation.tolist()})"


@dataclass(frozen=True)
class StereoRig:
    """Head pose plus interpupillary distance; eyes sit on the head x-axis."""

    head_pose: Pose
    ipd_m: float

    def validate(self) -> None:
        if not 0 < self.ipd_m < 0.2:
            raise GeometryError(f"ipd_m={self.ipd_m} outside (0, 0.2)")
        self.head_pose.validate()


def stereo_eye_poses(rig: StereoRig) -> tuple[Pose, Pose]:
    """Derive (left, right) eye poses from a head pose.

    Both eyes inherit the head rotation (parallel-axis stereo); translations
    sit at head +- (ipd/2) along the head's x-axis, left at -, right at +.
    """
    x_axis = rig.head_pose.rotation[:, 0]
    half = 0.5 * rig.ipd_m * x_axis
    left = Pose(rig.head_pose.rotation, rig.head_pose.translation - half, check=False)
    right = Pose(rig.head_pose.rotation, rig.head_pose.translation + half, check=False)
    return left, right


def ray_for_pixel(
    intr: CameraIntrinsics, pose: Pose, u: float, v: float
) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray through pixel (u, v): (origin, unit direction)."""
    if not (0 <= u < intr.width_px and 0 <= v < intr.height_px):
        raise OutOfImage(f"pixel ({u}, {v}) outside {intr.width_px}x{intr.height_px}")
    d_cam = np.array([(u - intr.cx) / intr.fx, -(v - intr.cy) / intr.fy, -1.0])
    d = pose.rotation @ d_cam
    return pose.translation.copy(), d / np.linalg.norm(d)


def rays_for_pixels(
    intr: CameraIntrinsics, pose: Pose, us: np.ndarray, vs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ray_for_pixel over arrays of pixel coordinates.

    Returns (origin (3,), directions (N, 3) unit). Bounds are not checked;
    callers pass generated pixel grids.
    """
    d_cam = np.stack(
        [
            (np.asarray(us, dtype=np.float64) - intr.cx) / intr.fx,
            -(np.asarray(vs, dtype=np.float64) - intr.cy) / intr.fy,
            -np.ones_like(us, dtype=np.float64),
        ],
        axis=-1,
    )
    d = d_cam @ pose.rotation.T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return pose.translation.copy(), d


def project_point(intr: CameraIntrinsics, pose: Pose, point) -> tuple[float, float]:
    """Project a world point to pixel coordinates (inverse of ray_for_pixel)."""
    p_cam = pose.rotation.T @ (np.asarray(point, dtype=np.float64) - pose.translation)
    depth = -p_cam[2]  # positive in front of the camera
    if depth <= 0:
        raise BehindCamera(f"point has camera-frame depth {depth:.6g} <= 0")
    u = intr.cx + intr.fx * p_cam[0] / depth
    v = intr.cy - intr.fy * p_cam[1] / depth
    return float(u), float(v)


def quad_for_frustum(intr: CameraIntrinsics, distance_m: float) -> np.ndarray:
    """Camera-frame corners of a quad filling the view frustum at z = -d.

    Corners are ordered to project onto image corners (0,0), (W,0), (W,H),
    (0,H). Used by display clients to place a streamed frame so it aligns
    exactly with the camera's field of view.
    """
    if distance_m <= 0:
        raise GeometryError("distance_m must be positive")
    d = float(distance_m)
    corners = []
    for u, v in ((0.0, 0.0), (intr.width_px, 0.0), (intr.width_px, intr.height_px), (0.0, intr.height_px)):
        x = (u - intr.cx) * d / intr.fx
        y = -(v - intr.cy) * d / intr.fy
        corners.append((x, y, -d))
    return np.array(corners, dtype=np.float64)
