"""Raster and geometry primitives shared by the whole pipeline.

Everything downstream (feature maps, score maps, likelihood maps, masks)
is carried by a single Raster type: an H x W x C grid of finite floats
indexed (row, col, channel).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

RASTER_MAGIC = b"UVCD"


class DegenerateInputError(ValueError):
    """Raised when an input is technically valid but has no usable signal
    (constant likelihood map, all-zero vector field, ...)."""


def _as_float_array(values, dtype=None) -> np.ndarray:
    arr = np.asarray(values)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


@dataclass(frozen=True)
class Raster:
    """H x W x C grid of finite real values, row-major, channel-last."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.values)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"raster values must be (H, W, C), got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1 or c < 1:
            raise ValueError(f"raster dimensions must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("raster values must be finite (no NaN/Inf)")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def channel(self, k: int) -> "Raster":
        return Raster(self.values[:, :, k : k + 1])


@dataclass(frozen=True)
class BinaryMask:
    """H x W grid of {0, 1} values."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim != 2:
            raise ValueError(f"mask values must be (H, W), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {arr.shape}")
        arr = arr.astype(np.uint8, copy=False)
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def area(self) -> int:
        return int(self.values.sum())


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel-index bounding box."""

    row_min: int
    col_min: int
    row_max: int
    col_max: int

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"empty bbox {self}")
        if min(self.row_min, self.col_min) < 0:
            raise ValueError(f"negative bbox coordinates {self}")

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1

    def dilate(self, fraction: float, bounds: tuple[int, int]) -> "BBox":
        """Grow the box by `fraction` of its size (split over both sides),
        clamped to a (height, width) raster."""
        pad_r = int(round(0.5 * fraction * self.height))
        pad_c = int(round(0.5 * fraction * self.width))
        return BBox(
            max(0, self.row_min - pad_r),
            max(0, self.col_min - pad_c),
            min(bounds[0] - 1, self.row_max + pad_r),
            min(bounds[1] - 1, self.col_max + pad_c),
        )


@dataclass(frozen=True)
class PointPrompt:
    """A single positive/negative click at (row, col)."""

    row: int
    col: int
    polarity: str = "positive"

    def __post_init__(self):
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"polarity must be positive or negative, got {self.polarity!r}")
        if self.row < 0 or self.col < 0:
            raise ValueError(f"negative prompt coordinates {self}")


def bilinear_resize(r: Raster, out_height: int, out_width: int) -> Raster:
    """Bilinearly resample a raster to (out_height, out_width).

    Pixel-center coordinate convention with clamp-to-edge sampling; a
    constant raster is reproduced exactly at any size.
    """
    if out_height < 1 or out_width < 1:
        raise ValueError(f"target size must be positive, got {out_height}x{out_width}")
    src = r.values
    h, w, _ = src.shape
    if (out_height, out_width) == (h, w):
        return Raster(src.copy())

    def axis_coords(n_out, n_in):
        x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        x = np.clip(x, 0.0, n_in - 1)
        x0 = np.floor(x).astype(np.int64)
        x1 = np.minimum(x0 + 1, n_in - 1)
        return x0, x1, (x - x0)

    r0, r1, wr = axis_coords(out_height, h)
    c0, c1, wc = axis_coords(out_width, w)

    work = src.astype(np.float64, copy=False)
    # lerp as a + w*(b - a): exact on constant fields
    top = work[r0][:, c0] + wc[None, :, None] * (work[r0][:, c1] - work[r0][:, c0])
    bot = work[r1][:, c0] + wc[None, :, None] * (work[r1][:, c1] - work[r1][:, c0])
    out = top + wr[:, None, None] * (bot - top)
    return Raster(out.astype(src.dtype, copy=False))


def minmax_normalize(r: Raster) -> Raster:
    """Affinely map a single-channel raster onto [0, 1]; constant input
    maps to all zeros."""
    if r.channels != 1:
        raise ValueError(f"minmax_normalize expects a single channel, got {r.channels}")
    v = r.values
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        return Raster(np.zeros_like(v))
    return Raster((v - lo) / (hi - lo))


# ---------------------------------------------------------------------------
# serialization: flat binary container and PNG import/export


def write_raster(path, r: Raster) -> None:
    """Write the 16-byte-header UVCD container (f32 LE, row-major)."""
    path = Path(path)
    header = RASTER_MAGIC + struct.pack("<III", r.height, r.width, r.channels)
    payload = np.ascontiguousarray(r.values, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def read_raster(path) -> Raster:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != RASTER_MAGIC:
        raise ValueError(f"{path} is not a raster container")
    h, w, c = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * h * w * c
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=16).reshape(h, w, c)
    return Raster(values.astype(np.float32))


def write_mask_png(path, mask: BinaryMask) -> None:
    Image.fromarray(mask.values * np.uint8(255), mode="L").save(path)


def read_mask_png(path) -> BinaryMask:
    arr = np.asarray(Image.open(path).convert("L"))
    return BinaryMask((arr >= 128).astype(np.uint8))


def write_image_png(path, r: Raster) -> None:
    """Write a [0,1] float raster (1 or 3 channels) as an 8-bit PNG."""
    arr = np.clip(r.values, 0.0, 1.0)
    arr = np.round(arr * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    elif arr.shape[2] == 3:
        Image.fromarray(arr, mode="RGB").save(path)
    else:
        raise ValueError(f"PNG export supports 1 or 3 channels, got {arr.shape[2]}")


def read_image_png(path) -> Raster:
    """Read a PNG into a 3-channel [0,1] float raster."""
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return Raster(arr)
