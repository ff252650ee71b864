"""Central finite-difference verification of the hand-written gradients.

The numeric derivative is ``(L(θ + h e_i) - L(θ - h e_i)) / 2h`` with
``h = 1e-6``.  Subtracting two separately rounded loss totals would leave an
error of order ``eps * |L| / h`` (about 1e-10 here), swamping the many
gradient entries that are themselves ~1e-8.  So the difference is
accumulated term by term from the two forward passes: per-pixel BCE
differences, per-hidden-unit logit differences, and the dice and softplus
differences rewritten algebraically.  Only forward values enter; the
analytic gradient is never consulted.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .config import TrainConfig
from .features import DISC_IN, GEN_IN, OUT_DIM
from .losses import DICE_EPS, sigmoid
from .networks import DiscriminatorParams, GeneratorParams, generator_pass
from .train import discriminator_loss_and_grad, generator_objective_and_grad

FD_STEP = 1e-6
N_PARAMS = 200
DENOM_FLOOR = 1e-8


def max_relative_error(
    grad: np.ndarray,
    loss_delta: Callable[[int, float], float],
    rng: np.random.Generator,
    n_params: int = N_PARAMS,
    step: float = FD_STEP,
) -> float:
    """Worst ``|a - n| / max(|a|, |n|, 1e-8)`` over a random parameter subset.

    ``loss_delta(i, h)`` must return ``L(θ + h e_i) - L(θ - h e_i)``.
    """
    if grad.size == 0:
        return 0.0
    idx = rng.choice(grad.size, size=min(n_params, grad.size), replace=False)
    worst = 0.0
    for i in idx:
        num = loss_delta(int(i), step) / (2.0 * step)
        err = abs(grad[i] - num) / max(abs(grad[i]), abs(num), DENOM_FLOOR)
        worst = max(worst, err)
    return worst


def _perturbed(flat: np.ndarray, i: int, h: float, forward):
    old = flat[i]
    flat[i] = old + h
    up = forward()
    flat[i] = old - h
    down = forward()
    flat[i] = old
    return up, down


def _bce_elems(z, y):
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def generator_loss_delta(x, y, w, g: GeneratorParams, cfg: TrainConfig) -> Callable[[int, float], float]:
    n = len(x)
    ysum = y.sum(axis=1)

    def delta(i: int, h: float) -> float:
        zp, zm = _perturbed(g.flat, i, h, lambda: generator_pass(x, g)[0])
        d_bce = np.mean(_bce_elems(zp, y) - _bce_elems(zm, y), axis=1)
        pp, pm = sigmoid(zp), sigmoid(zm)
        dp = pp - pm
        # dice = 1 - a/s with a = 2*sum(p*y) + eps, s = sum(p) + sum(y) + eps
        a_m = 2.0 * np.sum(pm * y, axis=1) + DICE_EPS
        s_m = np.sum(pm, axis=1) + ysum + DICE_EPS
        da = 2.0 * np.sum(dp * y, axis=1)
        ds = np.sum(dp, axis=1)
        s_p = s_m + ds
        d_dice = -(da * s_m - a_m * ds) / (s_p * s_m)
        per = cfg.lambda_bce * d_bce + cfg.lambda_dice * d_dice
        return float(np.sum(w * per) / n)

    return delta


def _softplus_delta(u, du):
    """``softplus(u + du) - softplus(u)`` without cancellation."""
    return np.log1p(np.expm1(du) * sigmoid(u))


def discriminator_loss_delta(xe, xo, p: DiscriminatorParams) -> Callable[[int, float], float]:
    x = np.vstack([xe, xo])
    ne = len(xe)

    def contributions():
        # per-hidden-unit terms of the logit, so unchanged units cancel exactly
        a = np.maximum(x @ p.V1.T + p.c1, 0.0)
        return a * p.v2, p.c2[0]

    def delta(i: int, h: float) -> float:
        (tp, cp), (tm, cm) = _perturbed(p.flat, i, h, contributions)
        s = tm.sum(axis=1) + cm
        ds = (tp - tm).sum(axis=1) + (cp - cm)
        de = np.mean(_softplus_delta(-s[:ne], -ds[:ne]))
        do = np.mean(_softplus_delta(s[ne:], ds[ne:]))
        return float(de + do)

    return delta


@dataclass
class GradCheckSample:
    """Random inputs for one trial; shapes follow the network input widths."""

    gen_x: np.ndarray
    target: np.ndarray
    weights: np.ndarray
    disc_e: np.ndarray
    disc_o: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator, batch: int = 4) -> "GradCheckSample":
        half = max(1, batch // 2)
        return cls(
            gen_x=rng.random((batch, GEN_IN)),
            # soft targets exercise the general BCE/DICE path
            target=rng.random((batch, OUT_DIM)),
            weights=rng.uniform(0.1, 1.0, batch),
            disc_e=rng.random((half, DISC_IN)),
            disc_o=rng.random((half, DISC_IN)),
        )


def grad_check(
    model,
    sample: Optional[GradCheckSample] = None,
    rel_tol: float = 1e-4,
    rng: Optional[np.random.Generator] = None,
    cfg: TrainConfig = TrainConfig(),
) -> float:
    """Max relative gradient error of the stage loss that ``model`` is trained on.

    ``GeneratorParams`` are checked on the weighted IVM objective,
    ``DiscriminatorParams`` on the trusted/machine cross-entropy.  A model
    with no parameters scores 0.  The measured error is returned whatever
    ``rel_tol`` is; the tolerance only matters to callers reporting a verdict.
    """
    del rel_tol
    rng = rng if rng is not None else np.random.default_rng(0)
    if len(model.flat) == 0:
        return 0.0
    s = sample if sample is not None else GradCheckSample.random(rng)
    if isinstance(model, GeneratorParams):
        grad = generator_objective_and_grad(s.gen_x, s.target, s.weights, model, cfg)[1]
        delta = generator_loss_delta(s.gen_x, s.target, s.weights, model, cfg)
    elif isinstance(model, DiscriminatorParams):
        grad = discriminator_loss_and_grad(s.disc_e, s.disc_o, model)[1]
        delta = discriminator_loss_delta(s.disc_e, s.disc_o, model)
    else:
        raise TypeError(f"no loss registered for {type(model).__name__}")
    return max_relative_error(grad, delta, rng)


def run_trials(n_trials: int = 20, seed: int = 0, hidden: int = 16) -> Tuple[float, float]:
    """Worst error over ``n_trials`` random models and samples: ``(generator, discriminator)``."""
    rng = np.random.default_rng(seed)
    worst_g = worst_d = 0.0
    for _ in range(n_trials):
        g = GeneratorParams.init(rng, hidden)
        g.b1[:] = rng.normal(0.0, 0.1, hidden)
        g.b2[:] = rng.normal(0.0, 0.5, OUT_DIM)
        d = DiscriminatorParams.init(rng, hidden)
        d.c1[:] = rng.normal(0.0, 0.1, hidden)
        sample = GradCheckSample.random(rng)
        worst_g = max(worst_g, grad_check(g, sample, rng=rng))
        worst_d = max(worst_d, grad_check(d, sample, rng=rng))
    return worst_g, worst_d
