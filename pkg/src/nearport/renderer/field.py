"""Synthetic radiance fields: density + color over 3D space, hard-cropped.

A field is a set of primitives (constant-density boxes and spheres, or a
trilinearly interpolated voxel grid) inside an axis-aligned crop box.
Density is the sum of primitive densities; color is the density-weighted
mean of primitive colors. Outside the crop box density is exactly zero.

Scene files are UTF-8 `key = value` lines ('#' starts a comment). Keys may
repeat; numbers are whitespace-separated:

    background = r g b
    crop       = minx miny minz maxx maxy maxz
    box        = cx cy cz sx sy sz sigma r g b      # s* are full extents
    sphere     = cx cy cz radius sigma r g b
    grid       = path nx ny nz minx miny minz maxx maxy maxz r g b

`grid` references a little-endian float32 file of nx*ny*nz densities in
C order (shape (nx, ny, nz), z index fastest), path relative to the scene
file. If no crop line is given the union of primitive bounds is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


class SceneError(Exception):
    pass


class ParseError(SceneError):
    """Scene text could not be parsed; message carries line diagnostics."""


class ValidationError(SceneError):
    """Scene parsed but violates field invariants (e.g. negative density)."""


@dataclass(frozen=True)
class BoxPrimitive:
    center: np.ndarray
    size: np.ndarray  # full extents per axis
    sigma: float
    color: np.ndarray

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        half = 0.5 * self.size
        return self.center - half, self.center + half

    def density(self, points: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds()
        inside = np.all((points >= lo) & (points <= hi), axis=-1)
        return np.where(inside, self.sigma, 0.0)


@dataclass(frozen=True)
class SpherePrimitive:
    center: np.ndarray
    radius: float
    sigma: float
    color: np.ndarray

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.full(3, self.radius)
        return self.center - r, self.center + r

    def density(self, points: np.ndarray) -> np.ndarray:
        d2 = np.sum((points - self.center) ** 2, axis=-1)
        return np.where(d2 <= self.radius**2, self.sigma, 0.0)


@dataclass(frozen=True)
class GridPrimitive:
    values: np.ndarray  # (nx, ny, nz) float32, all >= 0
    bmin: np.ndarray
    bmax: np.ndarray
    color: np.ndarray

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bmin.copy(), self.bmax.copy()

    def density(self, points: np.ndarray) -> np.ndarray:
        # Map points into index space; trilinear with zero outside the grid.
        dims = np.array(self.values.shape, dtype=np.float64)
        rel = (points - self.bmin) / (self.bmax - self.bmin)
        coords = (rel * (dims - 1)).T
        out = ndimage.map_coordinates(
            self.values.astype(np.float64), coords, order=1, mode="constant", cval=0.0
        )
        outside = np.any((rel < 0) | (rel > 1), axis=-1)
        out[outside] = 0.0
        return out


class RadianceField:
    """Density + color over space, zero outside an axis-aligned crop box."""

    def __init__(self, primitives, crop_min, crop_max, background=(0.0, 0.0, 0.0)):
        self.primitives = list(primitives)
        self.crop_min = np.asarray(crop_min, dtype=np.float64).reshape(3)
        self.crop_max = np.asarray(crop_max, dtype=np.float64).reshape(3)
        self.background = np.clip(np.asarray(background, dtype=np.float64).reshape(3), 0.0, 1.0)
        self.validate()

    def validate(self) -> None:
        if not np.all(self.crop_min < self.crop_max):
            raise ValidationError(
                f"crop box is empty: min {self.crop_min.tolist()} max {self.crop_max.tolist()}"
            )
        for prim in self.primitives:
            if isinstance(prim, GridPrimitive):
                if min(prim.values.shape) < 2:
                    raise ValidationError(
                        f"grid dimensions must be >= 2 per axis, got {prim.values.shape}"
                    )
                if np.any(prim.values < 0):
                    raise ValidationError("grid contains negative densities")
            elif prim.sigma < 0:
                raise ValidationError(f"negative density {prim.sigma}")

    @classmethod
    def empty(cls, background=(0.0, 0.0, 0.0)) -> "RadianceField":
        return cls([], (-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), background)

    def density_and_color(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate sigma (N,) and rgb (N, 3) at world points (N, 3)."""
        points = np.asarray(points, dtype=np.float64)
        n = points.shape[0]
        sigma = np.zeros(n)
        weighted = np.zeros((n, 3))
        for prim in self.primitives:
            s = prim.density(points)
            sigma += s
            weighted += s[:, None] * prim.color
        inside_crop = np.all((points >= self.crop_min) & (points <= self.crop_max), axis=-1)
        sigma *= inside_crop
        rgb = np.zeros((n, 3))
        nz = sigma > 0
        rgb[nz] = weighted[nz] / sigma[nz, None]
        return sigma, np.clip(rgb, 0.0, 1.0)

    def with_crop(self, crop_min, crop_max) -> "RadianceField":
        return RadianceField(self.primitives, crop_min, crop_max, self.background)


def _floats(parts: list[str], n: int, lineno: int, key: str) -> list[float]:
    if len(parts) != n:
        raise ParseError(f"line {lineno}: '{key}' needs {n} values, got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as e:
        raise ParseError(f"line {lineno}: '{key}': {e}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(f"line {lineno}: '{key}' has non-finite value")
    return vals


def load_scene(path) -> RadianceField:
    """Parse a scene file into a RadianceField.

    Raises ParseError for malformed text and ValidationError for scenes
    that parse but break field invariants (negative sigma, empty crop).
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    primitives = []
    crop = None
    background = (0.0, 0.0, 0.0)
    directives = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = values', got {raw!r}")
        key, _, rest = line.partition("=")
        key = key.strip().lower()
        parts = rest.split()
        if key == "background":
            background = tuple(_floats(parts, 3, lineno, key))
        elif key == "crop":
            v = _floats(parts, 6, lineno, key)
            crop = (v[:3], v[3:])
        elif key == "box":
            v = _floats(parts, 10, lineno, key)
            if v[6] < 0:
                raise ValidationError(f"line {lineno}: negative density {v[6]}")
            if min(v[3:6]) <= 0:
                raise ParseError(f"line {lineno}: box extents must be positive")
            primitives.append(
                BoxPrimitive(np.array(v[:3]), np.array(v[3:6]), v[6], np.clip(v[7:10], 0, 1))
            )
        elif key == "sphere":
            v = _floats(parts, 8, lineno, key)
            if v[4] < 0:
                raise ValidationError(f"line {lineno}: negative density {v[4]}")
            if v[3] <= 0:
                raise ParseError(f"line {lineno}: sphere radius must be positive")
            primitives.append(
                SpherePrimitive(np.array(v[:3]), v[3], v[4], np.clip(v[5:8], 0, 1))
            )
        elif key == "grid":
            if len(parts) != 13:
                raise ParseError(f"line {lineno}: 'grid' needs path + 12 values")
            grid_path = path.parent / parts[0]
            v = _floats(parts[1:], 12, lineno, key)
            nx, ny, nz = (int(v[0]), int(v[1]), int(v[2]))
            if (nx, ny, nz) != (v[0], v[1], v[2]) or min(nx, ny, nz) < 2:
                raise ParseError(f"line {lineno}: grid dims must be integers >= 2")
            if not grid_path.exists():
                raise ParseError(f"line {lineno}: grid file not found: {grid_path}")
            values = np.fromfile(grid_path, dtype="<f4")
            if values.size != nx * ny * nz:
                raise ParseError(
                    f"line {lineno}: grid file has {values.size} values, expected {nx * ny * nz}"
                )
            if np.any(values < 0):
                raise ValidationError(f"line {lineno}: grid contains negative densities")
            bmin, bmax = np.array(v[3:6]), np.array(v[6:9])
            if not np.all(bmin < bmax):
                raise ParseError(f"line {lineno}: grid bounds are empty")
            primitives.append(
                GridPrimitive(values.reshape(nx, ny, nz), bmin, bmax, np.clip(v[9:12], 0, 1))
            )
        else:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
        directives += 1

    if directives == 0:
        raise ParseError(f"{path}: empty scene (no directives)")
    if crop is None:
        if primitives:
            los, his = zip(*(p.bounds() for p in primitives))
            crop = (np.min(los, axis=0), np.max(his, axis=0))
        else:
            crop = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    return RadianceField(primitives, crop[0], crop[1], background)
