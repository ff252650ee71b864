"""Apply a relevance heatmap to an image before handing it to a downstream model.

Irrelevant pixels (heatmap ``<= tau``) are overlaid with a solid colour,
blurred or desaturated; optionally the result is cropped to the smallest box
holding every activated pixel.  Relevant pixels are never modified.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .heatmap import (
    BinaryMask,
    Heatmap,
    ImageBuffer,
    activated_bbox,
    check_same_size,
    threshold,
)

METHODS = ("overlay", "blur", "grayscale")


@dataclass(frozen=True)
class DeployStrategy:
    method: str = "overlay"
    with_crop: bool = True
    tau: float = 0.0
    fill_rgb: Tuple[int, int, int] = (0, 0, 0)
    blur_sigma: Optional[float] = None  # None -> scale-adaptive default

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"tau must be in [0, 1), got {self.tau}")
        if len(self.fill_rgb) != 3 or any(not 0 <= c <= 255 for c in self.fill_rgb):
            raise ValueError(f"fill_rgb must be three bytes, got {self.fill_rgb}")
        if self.blur_sigma is not None and not self.blur_sigma > 0:
            raise ValueError(f"blur_sigma must be > 0, got {self.blur_sigma}")


def default_sigma(width: int, height: int) -> float:
    return max(1.0, min(width, height) / 32.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    radius = k.size // 2
    n = a.shape[axis]
    idx = np.clip(np.arange(-radius, n + radius), 0, n - 1)  # edge clamp
    padded = np.take(a, idx, axis=axis)
    out = np.zeros_like(a)
    for j, w in enumerate(k):
        out += w * np.take(padded, np.arange(j, j + n), axis=axis)
    return out


def gaussian_blur(img: ImageBuffer, sigma: float) -> ImageBuffer:
    """Separable, edge-clamped Gaussian blur of the whole image."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    k = gaussian_kernel(sigma)
    a = img.pixels.astype(np.float64)
    a = _convolve_axis(_convolve_axis(a, k, 0), k, 1)
    return ImageBuffer(np.clip(np.rint(a), 0, 255).astype(np.uint8))


def _select(img: ImageBuffer, mask: BinaryMask, replacement: np.ndarray) -> ImageBuffer:
    check_same_size(img, mask)
    out = np.where(mask.bits[:, :, None], img.pixels, replacement)
    return ImageBuffer(out.astype(np.uint8))


def overlay_region(img: ImageBuffer, mask: BinaryMask, fill_rgb=(0, 0, 0)) -> ImageBuffer:
    """Replace pixels outside ``mask`` with a solid colour."""
    fill = np.asarray(fill_rgb, dtype=np.uint8)[: img.channels]
    return _select(img, mask, np.broadcast_to(fill, img.pixels.shape))


def blur_region(img: ImageBuffer, mask: BinaryMask, sigma: float) -> ImageBuffer:
    """Blur pixels outside ``mask``.

    Not idempotent: the blur is recomputed over the whole image on each call,
    so masked pixels keep bleeding into their neighbours.
    """
    check_same_size(img, mask)
    return _select(img, mask, gaussian_blur(img, sigma).pixels)


def luma(pixels: np.ndarray) -> np.ndarray:
    p = pixels.astype(np.float64)
    y = 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def grayscale_region(img: ImageBuffer, mask: BinaryMask) -> ImageBuffer:
    if img.channels != 3:
        raise ValueError("grayscale_region needs an RGB image")
    gray = np.repeat(luma(img.pixels)[:, :, None], 3, axis=2)
    return _select(img, mask, gray)


def crop_to_activation(img: ImageBuffer, h: Heatmap, tau: float = 0.0) -> ImageBuffer:
    check_same_size(img, h)
    box = activated_bbox(h, tau)
    if box is None:
        return img
    return ImageBuffer(img.pixels[box.slices()])


def deploy(img: ImageBuffer, h: Heatmap, strategy: Optional[DeployStrategy] = None) -> ImageBuffer:
    """Mask instruction-irrelevant content; defaults to black overlay plus crop."""
    s = strategy or DeployStrategy()
    check_same_size(img, h)
    if img.channels != 3:
        raise ValueError("deploy needs an RGB image")
    keep = threshold(h, s.tau)
    if s.method == "overlay":
        out = overlay_region(img, keep, s.fill_rgb)
    elif s.method == "blur":
        sigma = s.blur_sigma if s.blur_sigma is not None else default_sigma(img.width, img.height)
        out = blur_region(img, keep, sigma)
    else:
        out = grayscale_region(img, keep)
    if s.with_crop:
        out = crop_to_activation(out, h, s.tau)
    return out
