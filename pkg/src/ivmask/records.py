from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .heatmap import BBox, Heatmap, ImageBuffer

SPLITS = ("e", "o")


@dataclass
class AnnotationRecord:
    """One (image, instruction, label heatmap, source) sample.

    ``image`` / ``heatmap`` hold in-memory payloads; on disk they live at
    ``image_path`` / ``label_path`` relative to the manifest directory.
    ``meta`` carries any extra JSON fields so they survive a rewrite.
    """

    id: str
    instruction: str
    source: str
    split: str
    image_path: Optional[str] = None
    label_path: Optional[str] = None
    bbox: Optional[BBox] = None
    meta: Dict[str, Any] = field(default_factory=dict)
    image: Optional[ImageBuffer] = field(default=None, repr=False, compare=False)
    heatmap: Optional[Heatmap] = field(default=None, repr=False, compare=False)
    # evaluation-only ground truth; never fed to training
    ground_truth: Optional[Heatmap] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if not self.source:
            raise ValueError("source tag must be non-empty")
