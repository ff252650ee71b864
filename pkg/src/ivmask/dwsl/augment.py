from __future__ import annotations

from typing import Tuple

import numpy as np

from ..heatmap import Heatmap, ImageBuffer, check_same_size, resize_array


def sample_crop(rng: np.random.Generator, width: int, height: int, scale_range=(0.6, 1.0)):
    """Pick a crop window ``(x0, y0, cw, ch)`` of linear scale drawn from ``scale_range``."""
    lo, hi = scale_range
    if not 0.0 < lo <= hi <= 1.0:
        raise ValueError(f"scale_range must lie in (0, 1], got {scale_range}")
    s = rng.uniform(lo, hi) if hi > lo else lo
    cw = max(1, int(round(s * width)))
    ch = max(1, int(round(s * height)))
    x0 = int(rng.integers(0, width - cw + 1))
    y0 = int(rng.integers(0, height - ch + 1))
    return x0, y0, cw, ch


def random_crop_resize(
    img: ImageBuffer,
    h: Heatmap,
    rng: np.random.Generator,
    scale_range=(0.6, 1.0),
) -> Tuple[ImageBuffer, Heatmap]:
    """Crop image and heatmap with the same window and resize both back.

    Both use bilinear interpolation; the image is rounded back to bytes.
    """
    check_same_size(img, h)
    x0, y0, cw, ch = sample_crop(rng, img.width, img.height, scale_range)
    if (cw, ch) == (img.width, img.height):
        return img, h
    window = (slice(y0, y0 + ch), slice(x0, x0 + cw))
    pix = resize_array(img.pixels[window].astype(np.float64), img.width, img.height)
    lab = resize_array(h.values[window], h.width, h.height)
    return (
        ImageBuffer(np.clip(np.rint(pix), 0, 255).astype(np.uint8)),
        Heatmap(np.clip(lab, 0.0, 1.0)),
    )
