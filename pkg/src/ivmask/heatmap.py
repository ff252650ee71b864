"""Heatmaps, binary masks, bounding boxes and image buffers.

All containers are immutable wrappers around numpy arrays stored row-major
as ``(height, width[, channels])``.  Every operation here is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, MalformedRle

ArrayLike = Union[np.ndarray, Sequence[float]]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Dense instruction-relevance map with values in ``[0, 1]``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"heatmap must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("heatmap values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_flat(cls, values: ArrayLike, width: int, height: int) -> "Heatmap":
        v = np.asarray(values, dtype=np.float64)
        if v.size != width * height:
            raise DimensionMismatch(f"{v.size} values for a {width}x{height} heatmap")
        return cls(v.reshape(height, width))

    @classmethod
    def zeros(cls, width: int, height: int) -> "Heatmap":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        return isinstance(other, Heatmap) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"Heatmap({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {b.shape}")
        object.__setattr__(self, "bits", _frozen(b.astype(bool)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self):
        return self.bits.shape

    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, on={self.popcount()})"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box; ``x0, y0`` inclusive, ``x1, y1`` exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"invalid bbox {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def as_tuple(self):
        return (self.x0, self.y0, self.x1, self.y1)

    def slices(self):
        return slice(self.y0, self.y1), slice(self.x0, self.x1)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit raster, ``pixels`` shaped ``(height, width, channels)``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[2] not in (1, 3) or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"image must be (h, w, 1|3), got shape {p.shape}")
        if p.dtype != np.uint8:
            if np.any(p < 0) or np.any(p > 255):
                raise ValueError("image samples must fit in 8 bits")
            p = p.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        return isinstance(other, ImageBuffer) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True)
class Instruction:
    text: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("instruction text must be non-empty")

    def __str__(self):
        return self.text


def check_same_size(a, b) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def threshold(h: Heatmap, tau: float = 0.0) -> BinaryMask:
    """Activated pixels, i.e. those with value strictly greater than ``tau``."""
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must be in [0, 1), got {tau}")
    return BinaryMask(h.values > tau)


def activated_bbox(h: Heatmap, tau: float = 0.0) -> Optional[BBox]:
    """Smallest box containing every activated pixel, or ``None`` if none are."""
    bits = threshold(h, tau).bits
    rows = np.flatnonzero(bits.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(bits.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def area_ratio(h: Heatmap, tau: float = 0.0) -> float:
    return threshold(h, tau).popcount() / h.values.size


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; two empty masks count as perfect agreement."""
    check_same_size(a, b)
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


RleCounts = List[int]


def rle_encode(m: BinaryMask) -> RleCounts:
    """Column-major run lengths, first run counts false bits (COCO layout)."""
    flat = m.bits.ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rle_decode(counts: Sequence[int], width: int, height: int) -> BinaryMask:
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts) or sum(counts) != width * height:
        raise MalformedRle(
            f"runs sum to {sum(counts)} (negative runs: {any(c < 0 for c in counts)}),"
            f" expected {width * height}"
        )
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return BinaryMask(flat.reshape((height, width), order="F"))


def rle_to_string(counts: RleCounts) -> str:
    return " ".join(str(c) for c in counts)


def rle_from_string(s: str) -> RleCounts:
    try:
        return [int(tok) for tok in s.split()]
    except ValueError as exc:
        raise MalformedRle(str(exc)) from exc


def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_array(a: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize of the first two axes of ``a`` (any trailing axes kept)."""
    if new_w < 1 or new_h < 1:
        raise ValueError("target size must be at least 1x1")
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape[:2]
    if (h, w) == (new_h, new_w):
        return a.copy()
    lo, hi, fy = _bilinear_axis(h, new_h)
    fy = fy.reshape((-1,) + (1,) * (a.ndim - 1))
    rows = a[lo] * (1.0 - fy) + a[hi] * fy
    lo, hi, fx = _bilinear_axis(w, new_w)
    fx = fx.reshape((1, -1) + (1,) * (a.ndim - 2))
    return rows[:, lo] * (1.0 - fx) + rows[:, hi] * fx


def resize_bilinear(h: Heatmap, new_w: int, new_h: int) -> Heatmap:
    return Heatmap(np.clip(resize_array(h.values, new_w, new_h), 0.0, 1.0))
