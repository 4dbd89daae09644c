"""Renderer-facing types and the pluggable renderer interface.

The pose->frame pipeline treats a renderer as a black box: give it
intrinsics and a pose, get back an image plus the wall time the render
took. Anything satisfying that contract can sit behind a viewpoint worker.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ..geometry import CameraIntrinsics, GeometryError, Pose


@dataclass(frozen=True)
class RenderRequest:
    """One view to render: camera plus raymarch bounds."""

    intrinsics: CameraIntrinsics
    pose: Pose
    step_m: float = 0.005
    t_near: float = 0.05
    t_far: float = 20.0

    def validate(self) -> None:
        self.intrinsics.validate()
        self.pose.validate()
        if self.step_m <= 0:
            raise GeometryError("step_m must be positive")
        if not 0 <= self.t_near < self.t_far:
            raise GeometryError("need 0 <= t_near < t_far")


@dataclass(frozen=True)
class RenderedImage:
    """RGB8 image, row-major top-to-bottom, plus measured render wall time.

    `degenerate` marks renders where no ray intersected the scene's crop box
    within [t_near, t_far]; such images are pure background.
    """

    width_px: int
    height_px: int
    pixels: bytes = field(repr=False)
    render_time_ms: float
    degenerate: bool = False

    def __post_init__(self):
        expected = 3 * self.width_px * self.height_px
        if len(self.pixels) != expected:
            raise ValueError(f"pixel buffer is {len(self.pixels)} bytes, expected {expected}")

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(
            self.height_px, self.width_px, 3
        )

    @classmethod
    def from_array(
        cls, rgb: np.ndarray, render_time_ms: float, degenerate: bool = False
    ) -> "RenderedImage":
        rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
        h, w, _ = rgb.shape
        return cls(w, h, rgb.tobytes(), render_time_ms, degenerate)


class Renderer(ABC):
    """Anything that can turn (intrinsics, pose) into a RenderedImage."""

    @abstractmethod
    def render(self, intrinsics: CameraIntrinsics, pose: Pose) -> RenderedImage:
        raise NotImplementedError
