from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamWState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64))


def adamw_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamWState,
    lr: float,
    betas=(0.9, 0.95),
    weight_decay: float = 0.0,
    eps: float = 1e-8,
) -> np.ndarray:
    """One AdamW update, in place on ``params`` and ``state``; returns ``params``.

    Decay is decoupled (applied to the parameters, scaled by ``lr``) and the
    moment estimates are bias corrected.
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeMismatch(f"params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    b1, b2 = betas
    state.t += 1
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    if weight_decay:
        params *= 1.0 - lr * weight_decay
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params
