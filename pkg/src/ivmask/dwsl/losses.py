"""Segmentation losses on logit maps, with analytic gradients.

Per-sample functions operate on the last axis, so ``z`` may be a single map
``(N,)`` or a batch ``(B, N)``.  Batch reductions sum in ascending sample
order (plain ``np.sum`` over axis 0 of a C-contiguous array), which keeps
training bitwise reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LengthMismatch

DICE_EPS = 1.0


@dataclass(frozen=True)
class LossWeights:
    lambda_bce: float = 1.0
    lambda_dice: float = 1.0


def _check(z, y):
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z.shape != y.shape:
        raise LengthMismatch(f"shape {z.shape} vs {y.shape}")
    return z, y


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def bce_per_sample(z, y) -> np.ndarray:
    z, y = _check(z, y)
    return np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z))), axis=-1)


def bce_from_logits(z, y) -> float:
    """Mean binary cross-entropy of logits ``z`` against (soft) targets ``y``."""
    z, y = _check(z, y)
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def dice_per_sample(p, y, eps: float = DICE_EPS) -> np.ndarray:
    p, y = _check(p, y)
    inter = np.sum(p * y, axis=-1)
    total = np.sum(p, axis=-1) + np.sum(y, axis=-1)
    return 1.0 - (2.0 * inter + eps) / (total + eps)


def dice_loss(p, y, eps: float = DICE_EPS) -> float:
    """Soft dice ``1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps)``."""
    p, y = _check(p, y)
    return float(1.0 - (2.0 * np.sum(p * y) + eps) / (np.sum(p) + np.sum(y) + eps))


def ivm_loss_per_sample(z, y, weights: LossWeights = LossWeights()) -> np.ndarray:
    z, y = _check(z, y)
    return weights.lambda_bce * bce_per_sample(z, y) + weights.lambda_dice * dice_per_sample(sigmoid(z), y)


def ivm_loss(z, y, weights: LossWeights = LossWeights()) -> float:
    z, y = _check(z, y)
    return weights.lambda_bce * bce_from_logits(z, y) + weights.lambda_dice * dice_loss(sigmoid(z), y)


def ivm_loss_and_grad(z, y, weights: LossWeights = LossWeights()):
    """Per-sample IVM loss and its gradient w.r.t. the logits.

    Returns ``(loss, dz)`` with ``loss`` shaped like ``z`` minus the last
    axis and ``dz`` shaped like ``z``.
    """
    z, y = _check(z, y)
    n = z.shape[-1]
    p = sigmoid(z)
    bce = np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z))), axis=-1)
    inter = np.sum(p * y, axis=-1, keepdims=True)
    denom = np.sum(p, axis=-1, keepdims=True) + np.sum(y, axis=-1, keepdims=True) + DICE_EPS
    numer = 2.0 * inter + DICE_EPS
    dice = 1.0 - (numer / denom)[..., 0]
    # d dice / d p_i = -(2 y_i denom - numer) / denom^2
    d_dice_dp = -(2.0 * y * denom - numer) / denom**2
    dz = weights.lambda_bce * (p - y) / n + weights.lambda_dice * d_dice_dp * p * (1.0 - p)
    return weights.lambda_bce * bce + weights.lambda_dice * dice, dz
