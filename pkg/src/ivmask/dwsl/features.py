"""Fixed feature extractors standing in for the frozen vision/language backbones.

Per sample we compute

* ``image``: 16x16 bilinear downsample of the luma image, in [0, 1];
* ``text``: hashed bag of lowercase tokens (FNV-1a mod 64), L2-normalised;
* ``prior``: 16x16 instruction-conditioned relevance map, the similarity of
  each pixel to the colour words in the instruction (a crude stand-in for a
  multimodal model's fused image/text representation);
* ``label``: 16x16 downsample of the label heatmap;
* ``desc``: a short label-conditioned descriptor pooled from the image under
  the label (stand-in for a label encoder cross-attending to image features).

The generator reads ``[image ; text ; prior]`` and the discriminator reads
``[text ; desc]``.  The discriminator never sees raw maps: with only a few
dozen trusted samples it would otherwise memorise them instead of judging
label quality.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..colors import COLOR_LEXICON
from ..heatmap import Heatmap, ImageBuffer, Instruction, resize_array

IMAGE_SIDE = 16
TEXT_DIM = 64
LABEL_SIDE = 16
OUT_SIDE = 32

IMAGE_DIM = IMAGE_SIDE * IMAGE_SIDE
PRIOR_DIM = IMAGE_DIM
LABEL_DIM = LABEL_SIDE * LABEL_SIDE
DESC_DIM = 7
OUT_DIM = OUT_SIDE * OUT_SIDE
GEN_IN = IMAGE_DIM + TEXT_DIM + PRIOR_DIM
DISC_IN = TEXT_DIM + DESC_DIM

COLOR_WIDTH = 0.25  # Gaussian width in normalised RGB distance
AREA_SCALE = 10.0

_FNV_OFFSET = 0x811C9DC5
_FNV_PRIME = 0x01000193


def fnv1a_32(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFF
    return h


def gray01(img: ImageBuffer) -> np.ndarray:
    p = img.pixels.astype(np.float64)
    if img.channels == 1:
        return p[:, :, 0] / 255.0
    return (0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]) / 255.0


def image_features(img: ImageBuffer) -> np.ndarray:
    return np.clip(resize_array(gray01(img), IMAGE_SIDE, IMAGE_SIDE), 0.0, 1.0).ravel()


def text_features(text: Union[str, Instruction]) -> np.ndarray:
    v = np.zeros(TEXT_DIM)
    for tok in str(text).lower().split():
        v[fnv1a_32(tok.encode("utf-8")) % TEXT_DIM] += 1.0
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def color_words(text: Union[str, Instruction]) -> list:
    return [t for t in str(text).lower().split() if t in COLOR_LEXICON]


def color_match(img: ImageBuffer, text: Union[str, Instruction]) -> np.ndarray:
    """Full-resolution similarity in [0, 1] to the colours named in ``text``."""
    out = np.zeros((img.height, img.width))
    if img.channels != 3:
        return out
    rgb = img.pixels.astype(np.float64)
    for word in color_words(text):
        ref = np.asarray(COLOR_LEXICON[word], dtype=np.float64)
        dist = np.sqrt(np.sum((rgb - ref) ** 2, axis=2)) / 255.0
        out = np.maximum(out, np.exp(-((dist / COLOR_WIDTH) ** 2)))
    return out


def prior_features(img: ImageBuffer, text: Union[str, Instruction], match: Optional[np.ndarray] = None) -> np.ndarray:
    m = color_match(img, text) if match is None else match
    return np.clip(resize_array(m, IMAGE_SIDE, IMAGE_SIDE), 0.0, 1.0).ravel()


def label_features(h: Union[Heatmap, np.ndarray]) -> np.ndarray:
    v = h.values if isinstance(h, Heatmap) else np.asarray(h, dtype=np.float64)
    return np.clip(resize_array(v, LABEL_SIDE, LABEL_SIDE), 0.0, 1.0).ravel()


def label_descriptor(
    img: ImageBuffer,
    text: Union[str, Instruction],
    h: Union[Heatmap, np.ndarray],
    match: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Pool image evidence under the label.

    Returns ``[mean colour match under label, share of colour-match mass
    covered, area fraction * 10, bbox fill ratio, mean R, G, B under label]``;
    all zeros for an empty label.
    """
    lab = h.values if isinstance(h, Heatmap) else np.asarray(h, dtype=np.float64)
    m = color_match(img, text) if match is None else match
    mass = lab.sum()
    if mass <= 0:
        return np.zeros(DESC_DIM)
    hit = float(np.sum(lab * m))
    total_match = m.sum()
    rows = np.flatnonzero(lab.any(axis=1))
    cols = np.flatnonzero(lab.any(axis=0))
    box = (rows[-1] - rows[0] + 1) * (cols[-1] - cols[0] + 1)
    rgb = img.pixels.astype(np.float64) / 255.0
    if img.channels == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    mean_rgb = np.tensordot(lab, rgb, axes=([0, 1], [0, 1])) / mass
    return np.array(
        [
            hit / mass,
            hit / total_match if total_match > 0 else 0.0,
            AREA_SCALE * mass / lab.size,
            mass / box,
            *mean_rgb,
        ]
    )


def label_target(h: Union[Heatmap, np.ndarray]) -> np.ndarray:
    """32x32 training target: block max-pool when the size divides evenly."""
    v = h.values if isinstance(h, Heatmap) else np.asarray(h, dtype=np.float64)
    rows, cols = v.shape
    if rows % OUT_SIDE == 0 and cols % OUT_SIDE == 0:
        fy, fx = rows // OUT_SIDE, cols // OUT_SIDE
        out = v.reshape(OUT_SIDE, fy, OUT_SIDE, fx).max(axis=(1, 3))
    else:
        out = resize_array(v, OUT_SIDE, OUT_SIDE)
    return np.clip(out, 0.0, 1.0).ravel()


@dataclass(frozen=True)
class SampleFeatures:
    image: np.ndarray
    text: np.ndarray
    prior: np.ndarray
    label: Optional[np.ndarray] = None
    desc: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None

    @classmethod
    def extract(cls, img: ImageBuffer, text, h: Optional[Heatmap] = None) -> "SampleFeatures":
        match = color_match(img, text)
        return cls(
            image=image_features(img),
            text=text_features(text),
            prior=prior_features(img, text, match),
            label=None if h is None else label_features(h),
            desc=None if h is None else label_descriptor(img, text, h, match),
            target=None if h is None else label_target(h),
        )

    @property
    def gen_input(self) -> np.ndarray:
        return np.concatenate([self.image, self.text, self.prior])

    @property
    def disc_input(self) -> np.ndarray:
        if self.desc is None:
            raise ValueError("sample has no label")
        return np.concatenate([self.text, self.desc])


class FeatureTable:
    """Feature matrices for a sequence of records, row ``i`` = record ``i``.

    Records need ``image``, ``instruction`` and (unless ``labels=False``)
    ``heatmap``.  The records are kept so augmentation can re-extract.
    """

    def __init__(self, records: Sequence, *, labels: bool = True):
        self.records = list(records)
        n = len(self.records)
        self.ids = [r.id for r in self.records]
        self.gen = np.empty((n, GEN_IN))
        self.disc = np.empty((n, DISC_IN)) if labels else None
        self.target = np.empty((n, OUT_DIM)) if labels else None
        for i, r in enumerate(self.records):
            f = SampleFeatures.extract(r.image, r.instruction, r.heatmap if labels else None)
            self.gen[i] = f.gen_input
            if labels:
                self.disc[i] = f.disc_input
                self.target[i] = f.target

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_arrays(cls, gen, disc=None, target=None, ids=None) -> "FeatureTable":
        t = cls.__new__(cls)
        t.records = []
        t.gen = np.asarray(gen, dtype=np.float64)
        t.disc = None if disc is None else np.asarray(disc, dtype=np.float64)
        t.target = None if target is None else np.asarray(target, dtype=np.float64)
        t.ids = list(ids) if ids is not None else [str(i) for i in range(len(t.gen))]
        return t
