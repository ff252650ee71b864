"""Instruction-guided visual masking toolkit.

Heatmap types and mask deployment, expert-ensemble label fusion, a synthetic
grounding benchmark and discriminator-weighted supervised learning (DWSL)
with hand-written gradients.
"""
from .deploy import DeployStrategy, crop_to_activation, deploy
from .errors import IVMError
from .fusion import ExpertProposal, FusionMethod, InstructionSimplifier, agreement, build_candidate_label, fuse
from .heatmap import (
    BBox,
    BinaryMask,
    Heatmap,
    ImageBuffer,
    Instruction,
    activated_bbox,
    area_ratio,
    mask_iou,
    resize_bilinear,
    rle_decode,
    rle_encode,
    threshold,
)
from .records import AnnotationRecord

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "BBox",
    "BinaryMask",
    "DeployStrategy",
    "ExpertProposal",
    "FusionMethod",
    "Heatmap",
    "IVMError",
    "ImageBuffer",
    "Instruction",
    "InstructionSimplifier",
    "activated_bbox",
    "agreement",
    "area_ratio",
    "build_candidate_label",
    "crop_to_activation",
    "deploy",
    "fuse",
    "mask_iou",
    "resize_bilinear",
    "rle_decode",
    "rle_encode",
    "threshold",
]
