"""Deterministic test-pattern renderer for end-to-end and timing tests.

Draws a checkerboard whose phase shifts with the camera translation
(quantized to 1 cm per axis) plus a corner glyph encoding an 8-bit label,
using integer math only, so output is bit-identical across runs and
platforms. An optional paced wait emulates a renderer whose per-frame time
is almost constant regardless of the pose.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..geometry import CameraIntrinsics, Pose
from .base import RenderedImage, Renderer, RenderRequest

_CELL_PX = 8
_BRIGHT = 230
_DARK = 60


def _busy_wait(ms: float) -> None:
    # Mostly sleeps, spins the tail: keeps measured time >= ms without
    # pinning a core for the whole duration.
    if ms <= 0:
        return
    deadline = time.perf_counter() + ms / 1000.0
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            return
        if remaining > 0.002:
            time.sleep(remaining - 0.002)
        else:
            time.sleep(0)


def _quantize_cm(x: float) -> int:
    return int(math.floor(x * 100.0 + 0.5))


def render_test_pattern(
    req: RenderRequest, seed_label: int, busy_wait_ms: float = 0.0
) -> RenderedImage:
    """Checkerboard + label glyph; phase encodes translation at 1 cm steps."""
    req.validate()
    t_start = time.perf_counter()
    w, h = req.intrinsics.width_px, req.intrinsics.height_px
    qx = _quantize_cm(float(req.pose.translation[0]))
    qy = _quantize_cm(float(req.pose.translation[1]))
    qz = _quantize_cm(float(req.pose.translation[2]))
    shift_x = qx * 3 + qz * 7
    shift_y = qy * 3 + qz * 5

    xs = (np.arange(w, dtype=np.int64) + shift_x) // _CELL_PX
    ys = (np.arange(h, dtype=np.int64) + shift_y) // _CELL_PX
    checker = (xs[None, :] + ys[:, None]) & 1
    img = np.where(checker[:, :, None] == 1, _BRIGHT, _DARK).astype(np.uint8).repeat(3, axis=2)

    # Corner glyph: 8 bit stripes, red for 1, blue for 0, MSB first.
    gh = min(8, h)
    for bit in range(8):
        x0 = bit * 2
        if x0 + 2 > w:
            break
        on = (seed_label >> (7 - bit)) & 1
        img[0:gh, x0 : x0 + 2] = (255, 0, 0) if on else (0, 0, 255)

    _busy_wait(busy_wait_ms - (time.perf_counter() - t_start) * 1000.0)
    elapsed_ms = max((time.perf_counter() - t_start) * 1000.0, 1e-3)
    return RenderedImage(w, h, img.tobytes(), elapsed_ms)


class TestPatternRenderer(Renderer):
    """Pattern renderer pinned to one viewpoint label and a fixed frame time."""

    __test__ = False  # not a pytest class despite the name

    def __init__(self, label: int, render_ms: float = 30.0):
        self.label = label
        self.render_ms = render_ms

    def render(self, intrinsics: CameraIntrinsics, pose: Pose) -> RenderedImage:
        req = RenderRequest(intrinsics, pose)
        return render_test_pattern(req, self.label, busy_wait_ms=self.render_ms)
