import time

import numpy as np
import pytest

from nearport.geometry import CameraIntrinsics, Pose
from nearport.renderer import RenderedImage, Renderer

GOLDEN_DIR = __import__("pathlib").Path(__file__).parent / "golden"


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(64, 48, 60.0, 60.0, 32.0, 24.0)


@pytest.fixture
def identity_pose():
    return Pose.identity()


class InstantRenderer(Renderer):
    """Zero-work renderer recording the poses it was asked to render."""

    def __init__(self, sleep_s: float = 0.0):
        self.sleep_s = sleep_s
        self.rendered_poses: list[np.ndarray] = []

    def render(self, intrinsics, pose):
        self.rendered_poses.append(pose.translation.copy())
        if self.sleep_s:
            time.sleep(self.sleep_s)
        rgb = np.zeros((intrinsics.height_px, intrinsics.width_px, 3), dtype=np.uint8)
        return RenderedImage.from_array(rgb, max(self.sleep_s * 1000.0, 0.01))


class FailingRenderer(Renderer):
    def render(self, intrinsics, pose):
        raise RuntimeError("renderer exploded")
