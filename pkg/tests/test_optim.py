import numpy as np
import pytest

from ivmask.dwsl.optim import AdamWState, adamw_step
from ivmask.errors import ShapeMismatch


def test_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    s = AdamWState.zeros_like(p)
    adamw_step(p, np.zeros(2), s, lr=0.1)
    assert p.tolist() == [1.0, -2.0]


def test_first_step_hand_computation():
    p = np.array([0.0])
    s = AdamWState.zeros_like(p)
    adamw_step(p, np.array([1.0]), s, lr=0.1, betas=(0.9, 0.95))
    # m_hat = v_hat = 1 after bias correction
    assert p[0] == pytest.approx(-0.1 * 1.0 / (1.0 + 1e-8), abs=1e-15)


def reference_adamw(p, grads, lr, b1, b2, wd, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p * (1 - lr * wd)
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


def test_matches_scalar_reference():
    grads = [0.3, -1.2, 0.7, 0.05, 2.0]
    p = np.array([0.5])
    s = AdamWState.zeros_like(p)
    for g in grads:
        adamw_step(p, np.array([g]), s, lr=0.01, betas=(0.9, 0.95), weight_decay=0.1)
    assert p[0] == pytest.approx(reference_adamw(0.5, grads, 0.01, 0.9, 0.95, 0.1), abs=1e-14)
    assert s.t == len(grads)


def test_beta2_zero_limit_is_sign_like():
    p = np.array([0.0, 0.0])
    s = AdamWState.zeros_like(p)
    adamw_step(p, np.array([3.0, -0.5]), s, lr=0.2, betas=(0.0, 0.0))
    assert np.allclose(p, [-0.2, 0.2], atol=1e-8)


def test_decoupled_decay():
    p = np.array([2.0, -4.0])
    s = AdamWState.zeros_like(p)
    adamw_step(p, np.zeros(2), s, lr=0.1, weight_decay=0.5)
    assert np.allclose(p, [2.0 * 0.95, -4.0 * 0.95], atol=1e-15)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adamw_step(np.zeros(2), np.zeros(3), AdamWState.zeros_like(np.zeros(2)), lr=0.1)
