"""Image file helpers: deterministic binary PPM plus PNG via Pillow.

Golden images are stored as raw P6 PPM because its bytes are a pure
function of the pixels; PNG is offered for convenience when viewing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .protocol import FrameEncoding, FramePacket


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM")
    parts = data.split(b"\n", 3)
    if len(parts) < 4:
        raise ValueError(f"{path}: truncated PPM header")
    w, h = (int(x) for x in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3)
    return pixels.reshape(h, w, 3).copy()


def write_png(path, rgb: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), "RGB").save(path)


def write_image(path, rgb: np.ndarray) -> None:
    """Dispatch on extension: .ppm stays dependency-free, else Pillow."""
    if str(path).lower().endswith(".ppm"):
        write_ppm(path, rgb)
    else:
        write_png(path, rgb)


def frame_to_array(frame: FramePacket) -> np.ndarray:
    if frame.encoding == FrameEncoding.RAW_RGB8:
        return np.frombuffer(frame.image, dtype=np.uint8).reshape(
            frame.height_px, frame.width_px, 3
        )
    if frame.encoding == FrameEncoding.PNG:
        import io

        from PIL import Image

        return np.asarray(Image.open(io.BytesIO(frame.image)).convert("RGB"))
    raise ValueError(f"unknown frame encoding {frame.encoding}")


def write_frame_packet(path, frame: FramePacket) -> None:
    write_image(path, frame_to_array(frame))
