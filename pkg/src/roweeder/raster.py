"""Core raster types, rotation, and PNG I/O.

All grids are row-major with (row, col) indexing and the origin at the
top-left pixel. Geometric operations treat the image center, located at
((height-1)/2, (width-1)/2), as the rotation pivot. Instances are
immutable after construction (the wrapped arrays are write-protected),
so they can be shared freely across worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatch

# Class labels used everywhere downstream.
BACKGROUND = 0
CROP = 1
WEED = 2

# Palette PNG convention: background black, crop green, weed red.
CLASS_PALETTE = [0, 0, 0, 0, 255, 0, 255, 0, 0]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Raster:
    """Single-channel 2-D grid of finite real values."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DimensionMismatch(f"raster must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("raster values must be finite")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class BinaryMask:
    """2-D boolean grid (vegetation masks, rasterized row masks)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _freeze(bits))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def popcount(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class ClassMask:
    """Per-pixel label grid over {background=0, crop=1, weed=2}."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.uint8)
        if lab.ndim != 2:
            raise DimensionMismatch(f"class mask must be 2-D, got shape {lab.shape}")
        if lab.size and lab.max() > WEED:
            raise ValueError("class labels must be in {0, 1, 2}")
        object.__setattr__(self, "labels", _freeze(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def normalize_angle(angle_deg: float) -> float:
    """Map any angle to the (-180, 180] interval."""
    a = math.fmod(angle_deg, 360.0)
    if a > 180.0:
        a -= 360.0
    elif a <= -180.0:
        a += 360.0
    return a


def _rotation_source_indices(height: int, width: int, angle_deg: float):
    """Source (row, col) index grids for rotating content by ``angle_deg``.

    Output pixel (r, c) is sampled from the source at the inverse-rotated
    position (nearest neighbor). Positive angles rotate a line's Hough
    normal angle by the same amount. Returns (rows, cols, inside) where
    ``inside`` flags pixels whose source falls within the canvas.
    """
    angle = normalize_angle(angle_deg)
    rad = math.radians(angle)
    cos_a, sin_a = math.cos(rad), math.sin(rad)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0

    out_r, out_c = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    x = out_c - cx
    y = out_r - cy
    # Inverse rotation: src = R(-angle) @ out
    src_x = cos_a * x + sin_a * y
    src_y = -sin_a * x + cos_a * y
    src_c = np.floor(src_x + cx + 0.5).astype(np.int64)
    src_r = np.floor(src_y + cy + 0.5).astype(np.int64)
    inside = (src_r >= 0) & (src_r < height) & (src_c >= 0) & (src_c < width)
    return src_r, src_c, inside


def rotate_mask(mask: BinaryMask, angle_deg: float) -> BinaryMask:
    """Rotate a binary mask about its center, nearest-neighbor sampled.

    Output dimensions equal input dimensions; pixels sampled from outside
    the source canvas are false.
    """
    if normalize_angle(angle_deg) == 0.0:
        return mask
    src_r, src_c, inside = _rotation_source_indices(mask.height, mask.width, angle_deg)
    out = np.zeros(mask.shape, dtype=bool)
    out[inside] = mask.bits[src_r[inside], src_c[inside]]
    return BinaryMask(out)


def rotate_raster(raster: Raster, angle_deg: float, fill: float = 0.0) -> Raster:
    """Rotate a value raster about its center (nearest neighbor, ``fill`` outside)."""
    if normalize_angle(angle_deg) == 0.0:
        return raster
    src_r, src_c, inside = _rotation_source_indices(raster.height, raster.width, angle_deg)
    out = np.full(raster.shape, fill, dtype=np.float64)
    out[inside] = raster.values[src_r[inside], src_c[inside]]
    return Raster(out)


def rotate_classmask(mask: ClassMask, angle_deg: float) -> ClassMask:
    """Rotate a class mask about its center; labels are categorical, so
    sampling is nearest-neighbor and out-of-canvas pixels become background."""
    if normalize_angle(angle_deg) == 0.0:
        return mask
    src_r, src_c, inside = _rotation_source_indices(mask.height, mask.width, angle_deg)
    out = np.zeros(mask.shape, dtype=np.uint8)
    out[inside] = mask.labels[src_r[inside], src_c[inside]]
    return ClassMask(out)


def inverse_rotate_classmask(mask: ClassMask, angle_deg: float) -> ClassMask:
    """Undo ``rotate_classmask(_, angle_deg)``: rotate content by the
    opposite angle. Round-trip restores every pixel whose coordinates stay
    in bounds both ways (exact for multiples of 90 degrees on square grids)."""
    return rotate_classmask(mask, -angle_deg)


# ---------------------------------------------------------------------------
# PNG / TIFF I/O
# ---------------------------------------------------------------------------


def read_channel_raster(path: str | Path) -> Raster:
    """Read an 8- or 16-bit single-channel PNG/TIFF, normalized to [0, 1]."""
    with Image.open(path) as img:
        if img.mode == "I;16":
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif img.mode == "I":
            arr = np.asarray(img, dtype=np.float64)
            # Pillow promotes 16-bit grayscale to mode "I" for some TIFFs.
            arr = arr / 65535.0 if arr.max() > 255 else arr / 255.0
        elif img.mode == "F":
            arr = np.asarray(img, dtype=np.float64)
        elif img.mode in ("L", "P"):
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        elif img.mode in ("RGB", "RGBA"):
            # Tolerate RGB-saved grayscale channels by averaging.
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        else:
            raise ValueError(f"unsupported image mode {img.mode!r} in {path}")
    return Raster(np.clip(arr, 0.0, 1.0))


def write_channel_png(raster: Raster, path: str | Path) -> None:
    """Write a [0, 1] raster as 16-bit grayscale PNG."""
    arr = np.clip(raster.values, 0.0, 1.0)
    data = np.floor(arr * 65535.0 + 0.5).astype(np.uint16)
    Image.fromarray(data).save(path, format="PNG")


def write_classmask_png(mask: ClassMask, path: str | Path) -> None:
    """Write a class mask as an 8-bit palette PNG (black/green/red)."""
    img = Image.fromarray(mask.labels, mode="P")
    img.putpalette(CLASS_PALETTE + [0, 0, 0] * 253)
    img.save(path, format="PNG")


def read_classmask_png(path: str | Path) -> ClassMask:
    """Read a class mask from a palette PNG or a black/green/red RGB PNG."""
    with Image.open(path) as img:
        if img.mode == "P":
            labels = np.asarray(img, dtype=np.uint8)
            if labels.size and labels.max() > WEED:
                raise ValueError(f"palette mask {path} has indices outside {{0,1,2}}")
        elif img.mode in ("RGB", "RGBA"):
            rgb = np.asarray(img.convert("RGB"), dtype=np.int64)
            r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
            labels = np.zeros(rgb.shape[:2], dtype=np.uint8)
            green = (g > 127) & (r <= 127) & (b <= 127)
            red = (r > 127) & (g <= 127) & (b <= 127)
            black = (r <= 127) & (g <= 127) & (b <= 127)
            if not np.all(green | red | black):
                raise ValueError(f"RGB mask {path} contains colors outside black/green/red")
            labels[green] = CROP
            labels[red] = WEED
        elif img.mode == "L":
            labels = np.asarray(img, dtype=np.uint8)
            if labels.size and labels.max() > WEED:
                raise ValueError(f"grayscale mask {path} has values outside {{0,1,2}}")
        else:
            raise ValueError(f"unsupported mask mode {img.mode!r} in {path}")
    return ClassMask(labels)


def write_binarymask_png(mask: BinaryMask, path: str | Path) -> None:
    """Write a binary mask as an 8-bit PNG with values {0, 255}."""
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def read_binarymask_png(path: str | Path) -> BinaryMask:
    """Read a binary mask written by :func:`write_binarymask_png`."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(arr > 127)
