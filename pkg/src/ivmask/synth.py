"""Synthetic grounding scenes with clean and deliberately corrupted labels.

A scene is a handful of non-overlapping coloured rectangles and disks on a
dark background.  The instruction names exactly one of them by colour and
kind ("pick the red disk"); the ground-truth heatmap is 1 on that shape.
Corrupted labels model the failure modes of machine annotation: a shifted
mask, an inflated mask, or the mask of a different object.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .colors import COLOR_LEXICON
from .errors import PlacementFailure
from .heatmap import Heatmap, ImageBuffer, Instruction
from .records import AnnotationRecord

# saturated hues; their lumas (52..229) stay well apart in grayscale
PALETTE: Dict[str, Tuple[int, int, int]] = {
    name: COLOR_LEXICON[name] for name in ("red", "green", "blue", "yellow", "cyan", "magenta")
}
BACKGROUND = (16, 16, 16)
KINDS = ("rectangle", "disk")
CORRUPTIONS = ("shift", "dilate", "wrong_target")
MAX_ATTEMPTS = 1000
# mixed into held-out seeds so test scenes never reuse a training sub-seed
TEST_SEED_SALT = 0x7E57 << 32


@dataclass(frozen=True)
class SceneSpec:
    image_size: int = 64
    n_shapes: Tuple[int, int] = (4, 8)  # inclusive range
    palette: Tuple[str, ...] = tuple(PALETTE)
    kinds: Tuple[str, ...] = KINDS
    disk_radius: Tuple[int, int] = (5, 9)
    rect_side: Tuple[int, int] = (9, 17)
    margin: int = 1

    def __post_init__(self):
        lo, hi = self.n_shapes
        if not 1 <= lo <= hi:
            raise ValueError(f"n_shapes range must satisfy 1 <= lo <= hi, got {self.n_shapes}")
        if len(self.palette) < 1 or any(c not in PALETTE for c in self.palette):
            raise ValueError("palette entries must be known colour names")
        if any(k not in KINDS for k in self.kinds):
            raise ValueError(f"kinds must be drawn from {KINDS}")
        biggest = max(2 * self.disk_radius[1] + 1, self.rect_side[1])
        if biggest > self.image_size:
            raise ValueError("shapes do not fit in the image")


@dataclass(frozen=True)
class Shape:
    kind: str
    color: str
    mask: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Scene:
    image: ImageBuffer
    instruction: Instruction
    heatmap: Heatmap
    shapes: Tuple[Shape, ...]
    target_index: int

    def as_tuple(self):
        return self.image, self.instruction, self.heatmap


@dataclass(frozen=True)
class Corruption:
    """``kind`` in {shift, dilate, wrong_target, erase}; ``dx, dy`` for shift, ``r`` for dilate."""

    kind: str
    dx: int = 0
    dy: int = 0
    r: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTIONS + ("erase",):
            raise ValueError(f"unknown corruption {self.kind!r}")
        if self.r < 0:
            raise ValueError("dilation radius must be >= 0")


def _shape_mask(kind: str, size: int, rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    yy = np.arange(size)[:, None]
    xx = np.arange(size)[None, :]
    if kind == "disk":
        r = int(rng.integers(spec.disk_radius[0], spec.disk_radius[1] + 1))
        cy = int(rng.integers(r, size - r))
        cx = int(rng.integers(r, size - r))
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    w = int(rng.integers(spec.rect_side[0], spec.rect_side[1] + 1))
    h = int(rng.integers(spec.rect_side[0], spec.rect_side[1] + 1))
    x0 = int(rng.integers(0, size - w + 1))
    y0 = int(rng.integers(0, size - h + 1))
    m = np.zeros((size, size), dtype=bool)
    m[y0 : y0 + h, x0 : x0 + w] = True
    return m


def _grow(mask: np.ndarray, r: int) -> np.ndarray:
    """Max-filter with a (2r+1) square window, zero padded."""
    if r <= 0:
        return mask.copy()
    h, w = mask.shape
    padded = np.zeros((h + 2 * r, w + 2 * r), dtype=mask.dtype)
    padded[r : r + h, r : r + w] = mask
    out = np.zeros_like(mask)
    for dy in range(2 * r + 1):
        for dx in range(2 * r + 1):
            out = np.maximum(out, padded[dy : dy + h, dx : dx + w])
    return out


def render_scene(rng: np.random.Generator, spec: Optional[SceneSpec] = None) -> Scene:
    spec = spec or SceneSpec()
    size = spec.image_size
    n = int(rng.integers(spec.n_shapes[0], spec.n_shapes[1] + 1))
    target = (str(rng.choice(spec.palette)), str(rng.choice(spec.kinds)))
    others = [(c, k) for c in spec.palette for k in spec.kinds if (c, k) != target]
    if n > 1 and not others:
        raise PlacementFailure("palette/kinds leave no room for distractors")

    forbidden = np.zeros((size, size), dtype=bool)
    shapes: List[Shape] = []
    for i in range(n):
        if i == 0:
            color, kind = target
        else:
            color, kind = others[int(rng.integers(len(others)))]
        for _ in range(MAX_ATTEMPTS):
            m = _shape_mask(kind, size, rng, spec)
            if not np.any(m & forbidden):
                break
        else:
            raise PlacementFailure(f"could not place shape {i} after {MAX_ATTEMPTS} attempts")
        forbidden |= _grow(m, spec.margin)
        shapes.append(Shape(kind, color, m))

    # draw in a shuffled order so the target is not always first
    order = rng.permutation(n)
    shapes = [shapes[j] for j in order]
    target_index = int(np.flatnonzero(order == 0)[0])

    pixels = np.empty((size, size, 3), dtype=np.uint8)
    pixels[:] = BACKGROUND
    for s in shapes:
        pixels[s.mask] = PALETTE[s.color]
    label = shapes[target_index].mask.astype(np.float64)
    return Scene(
        image=ImageBuffer(pixels),
        instruction=Instruction(f"pick the {target[0]} {target[1]}"),
        heatmap=Heatmap(label),
        shapes=tuple(shapes),
        target_index=target_index,
    )


def gen_scene(rng: np.random.Generator, spec: Optional[SceneSpec] = None):
    """Return ``(image, instruction, heatmap)`` for one random scene."""
    return render_scene(rng, spec).as_tuple()


def shift_map(values: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by ``(dx, dy)`` pixels, zero-filling uncovered area."""
    h, w = values.shape
    out = np.zeros_like(values)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_y = slice(max(0, -dy), h - max(0, dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[dst_y, dst_x] = values[src_y, src_x]
    return out


def corrupt_label(
    h: Heatmap,
    rng: np.random.Generator,
    mode: Corruption,
    scene: Optional[Scene] = None,
) -> Heatmap:
    """Degrade a label; ``wrong_target`` needs the scene to pick another shape."""
    v = h.values
    if mode.kind == "shift":
        out = shift_map(v, mode.dx, mode.dy)
    elif mode.kind == "dilate":
        out = _grow(v, mode.r)
    elif mode.kind == "erase":
        out = np.zeros_like(v)
    else:
        if scene is None:
            raise ValueError("wrong_target corruption needs the scene's shapes")
        choices = [i for i in range(len(scene.shapes)) if i != scene.target_index]
        if not choices:
            out = np.zeros_like(v)
        else:
            out = scene.shapes[choices[int(rng.integers(len(choices)))]].mask.astype(np.float64)
    return Heatmap(np.clip(out, 0.0, 1.0))


def random_corruption(rng: np.random.Generator, image_size: int = 64) -> Corruption:
    """Draw a corruption mode uniformly from shift / dilate / wrong_target.

    Magnitudes scale with the image (20-32 px shifts and 8-12 px dilations
    at 64 px) so a corrupted label overlaps the true region poorly, even
    after the 2x downsampling used for training labels.
    """
    kind = CORRUPTIONS[int(rng.integers(len(CORRUPTIONS)))]
    if kind == "shift":
        lo, hi = max(1, 5 * image_size // 16), max(2, image_size // 2)
        mag = int(rng.integers(lo, hi + 1))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        return Corruption("shift", dx=int(round(mag * np.cos(angle))), dy=int(round(mag * np.sin(angle))))
    if kind == "dilate":
        lo, hi = max(1, image_size // 8), max(2, 3 * image_size // 16)
        return Corruption("dilate", r=int(rng.integers(lo, hi + 1)))
    return Corruption("wrong_target")


@dataclass
class MixedDataset:
    clean: List[AnnotationRecord]
    mixed: List[AnnotationRecord]


def make_record(
    rec_id: str,
    scene: Scene,
    split: str,
    label: Optional[Heatmap] = None,
    source: str = "synthetic:clean",
    is_clean: bool = True,
) -> AnnotationRecord:
    return AnnotationRecord(
        id=rec_id,
        instruction=scene.instruction.text,
        source=source,
        split=split,
        # ground truth and the clean flag are for evaluation only
        meta={"is_clean": is_clean},
        image=scene.image,
        heatmap=label if label is not None else scene.heatmap,
    )


def record_seed(master_seed: int, index: int) -> int:
    return (int(master_seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF


def build_mixed_dataset(
    seed: int,
    n_e: int = 50,
    n_o: int = 5000,
    corruption_rate: float = 0.4,
    spec: Optional[SceneSpec] = None,
) -> MixedDataset:
    """Clean D_e analog plus a D_o analog where a fraction of labels is corrupted.

    Record ``i`` (D_e first, then D_o) draws from its own generator seeded with
    ``seed ^ i`` so records are independent of generation order.  Every record
    keeps its ground-truth heatmap in ``ground_truth``.
    """
    if n_e < 1 or n_o < 1:
        raise ValueError("n_e and n_o must be >= 1")
    if not 0.0 <= corruption_rate <= 1.0:
        raise ValueError(f"corruption_rate must be in [0, 1], got {corruption_rate}")
    spec = spec or SceneSpec()
    clean, mixed = [], []
    for i in range(n_e + n_o):
        rng = np.random.default_rng(record_seed(seed, i))
        scene = render_scene(rng, spec)
        if i < n_e:
            rec = make_record(f"e{i:06d}", scene, "e")
            clean.append(rec)
        else:
            j = i - n_e
            if rng.random() < corruption_rate:
                mode = random_corruption(rng, spec.image_size)
                label = corrupt_label(scene.heatmap, rng, mode, scene)
                rec = make_record(f"o{j:06d}", scene, "o", label, f"synthetic:noisy:{mode.kind}", False)
            else:
                # D_o is the machine-side split even when the label happens to be clean
                rec = make_record(f"o{j:06d}", scene, "o", source="synthetic:noisy:none")
            mixed.append(rec)
        rec.ground_truth = scene.heatmap
    return MixedDataset(clean, mixed)


def build_test_set(seed: int, n: int = 500, spec: Optional[SceneSpec] = None) -> List[AnnotationRecord]:
    """Clean held-out scenes.

    Sub-seeds are ``(seed ^ TEST_SEED_SALT) ^ i``; the salt sits above bit 32,
    so for any 32-bit master seed they are disjoint from the sub-seeds used by
    ``build_mixed_dataset``.
    """
    spec = spec or SceneSpec()
    master = int(seed) ^ TEST_SEED_SALT
    out = []
    for i in range(n):
        scene = render_scene(np.random.default_rng(record_seed(master, i)), spec)
        rec = make_record(f"t{i:06d}", scene, "e")
        rec.ground_truth = scene.heatmap
        out.append(rec)
    return out
