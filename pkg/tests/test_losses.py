import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ivmask.dwsl.losses import (
    LossWeights,
    bce_from_logits,
    bce_per_sample,
    dice_loss,
    ivm_loss,
    ivm_loss_and_grad,
    sigmoid,
)
from ivmask.errors import LengthMismatch

LN2 = math.log(2.0)


def naive_bce(z, y):
    s = 1.0 / (1.0 + math.exp(-z))
    return -(y * math.log(s) + (1 - y) * math.log(1 - s))


def test_bce_examples():
    assert abs(bce_from_logits([0.0], [1.0]) - LN2) < 1e-12
    assert bce_from_logits([50.0], [1.0]) < 1e-20
    assert abs(bce_from_logits([2.0], [0.5]) - naive_bce(2.0, 0.5)) < 1e-12
    assert np.isfinite(bce_from_logits([1e4, -1e4], [0.0, 1.0]))
    assert bce_from_logits([1e4, -1e4], [0.0, 1.0]) == pytest.approx(1e4)
    with pytest.raises(LengthMismatch):
        bce_from_logits([0.0, 1.0], [1.0])


def test_dice_examples():
    p = np.array([0.0, 1.0, 1.0, 0.0])
    assert dice_loss(p, p) == 0.0
    assert dice_loss(np.zeros(5), np.zeros(5)) == 0.0
    expect = 1.0 - (2 * 0 + 1.0) / (100 + 0 + 1.0)
    assert abs(dice_loss(np.ones(100), np.zeros(100)) - expect) < 1e-15
    assert abs(expect - 0.990099) < 1e-6


def test_ivm_examples():
    z = np.array([0.3, -1.2, 2.0])
    y = np.array([1.0, 0.0, 0.5])
    assert ivm_loss(z, y, LossWeights(1.0, 0.0)) == bce_from_logits(z, y)
    big = np.array([60.0, -60.0, 60.0])
    assert ivm_loss(big, np.array([1.0, 0.0, 1.0]), LossWeights(0.0, 1.0)) < 1e-12
    # dice = 1 - (2*0.5 + 1) / (0.5 + 1 + 1) = 1/5
    assert abs(ivm_loss([0.0], [1.0]) - (LN2 + 0.2)) < 1e-12
    assert ivm_loss([0.0], [1.0]) == pytest.approx(0.893147, abs=1e-6)


def test_ivm_grad_matches_finite_differences(rng):
    z = rng.normal(0, 2, (3, 20))
    y = (rng.random((3, 20)) > 0.6) * rng.random((3, 20))
    w = LossWeights(0.7, 1.3)
    _, dz = ivm_loss_and_grad(z, y, w)
    h = 1e-6
    for idx in [(0, 0), (1, 7), (2, 19)]:
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        fd = (ivm_loss_and_grad(zp, y, w)[0][idx[0]] - ivm_loss_and_grad(zm, y, w)[0][idx[0]]) / (2 * h)
        assert abs(fd - dz[idx]) < 1e-7


def test_batch_rows_are_per_sample(rng):
    z = rng.normal(size=(4, 9))
    y = rng.random((4, 9))
    per, _ = ivm_loss_and_grad(z, y)
    for i in range(4):
        assert abs(per[i] - ivm_loss(z[i], y[i])) < 1e-14
    assert np.allclose(bce_per_sample(z, y), [bce_from_logits(a, b) for a, b in zip(z, y)], atol=1e-15)


def test_sigmoid_is_stable():
    assert sigmoid(-1000.0) == 0.0 and sigmoid(1000.0) == 1.0
    assert sigmoid(0.0) == 0.5


maps = st.integers(1, 30).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-30, 30)),
        arrays(np.float64, n, elements=st.floats(0, 1)),
    )
)


@given(maps)
def test_loss_ranges(zy):
    z, y = zy
    assert bce_from_logits(z, y) >= 0.0
    d = dice_loss(sigmoid(z), y)
    assert 0.0 <= d < 1.0
    assert ivm_loss(z, y) >= 0.0


@given(maps, st.randoms(use_true_random=False))
def test_batch_mean_is_permutation_invariant(zy, random):
    z, y = zy
    zb = np.stack([z, z[::-1], np.roll(z, 1)])
    yb = np.stack([y, y[::-1], np.roll(y, 2)])
    order = [0, 1, 2]
    random.shuffle(order)
    a = ivm_loss_and_grad(zb, yb)[0].mean()
    b = ivm_loss_and_grad(zb[order], yb[order])[0].mean()
    assert abs(a - b) < 1e-12
