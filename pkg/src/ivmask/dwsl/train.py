"""Two-stage discriminator-weighted training.

Stage I fits the discriminator to tell trusted labels (D_e) from machine
labels (D_o).  Stage II freezes it and trains the generator on D_e ∪ D_o with
every sample's IVM loss scaled by ``f(d)``, where ``f`` clamps ``d`` to
``[f_floor, f_ceil]``.

Batch means are taken over the batch in the order samples were drawn, which
together with the seeded generators makes a run bitwise reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import EmptyBatch, EmptyDataset, NumericalError
from .augment import random_crop_resize
from .config import TrainConfig
from .features import FeatureTable, SampleFeatures
from .losses import ivm_loss_and_grad, sigmoid, softplus
from .networks import (
    DiscriminatorParams,
    GeneratorParams,
    discriminator_grad,
    discriminator_pass,
    generator_grad,
    generator_pass,
)
from .optim import AdamWState, adamw_step

REGIMES = ("dwsl", "sl", "sl-clean")
STAGE1, STAGE2 = 1, 2

Scorer = Union[DiscriminatorParams, float, Callable[[np.ndarray], np.ndarray]]


def weight_fn(d, cfg: Optional[TrainConfig] = None):
    """Clamp discriminator outputs to ``[f_floor, f_ceil]`` (default ``[0.1, 1]``)."""
    floor, ceil = (0.1, 1.0) if cfg is None else (cfg.f_floor, cfg.f_ceil)
    out = np.minimum(np.maximum(floor, np.asarray(d, dtype=np.float64)), ceil)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HistoryRow:
    step: int
    stage: int
    loss: float
    mean_weight_e: float
    mean_weight_o: float


def _table(data) -> FeatureTable:
    return data if isinstance(data, FeatureTable) else FeatureTable(data)


def _rows(batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        return np.atleast_2d(batch)
    return np.stack([s.disc_input if isinstance(s, SampleFeatures) else s for s in batch])


# --- objectives ---------------------------------------------------------------


def discriminator_loss_and_grad(xe: np.ndarray, xo: np.ndarray, p: DiscriminatorParams):
    """Trusted/machine cross-entropy and its flat gradient.

    ``mean_e[-log d] + mean_o[-log(1 - d)]``, computed from logits via
    softplus so it stays finite when ``d`` saturates.
    """
    if len(xe) == 0 or len(xo) == 0:
        raise EmptyBatch("both discriminator batches must be non-empty")
    x = np.vstack([xe, xo])
    s, cache = discriminator_pass(x, p)
    ne = len(xe)
    s_e, s_o = s[:ne], s[ne:]
    loss = float(np.mean(softplus(-s_e)) + np.mean(softplus(s_o)))
    d = sigmoid(s)
    ds = np.concatenate([(d[:ne] - 1.0) / ne, d[ne:] / len(xo)])
    return loss, discriminator_grad(cache, p, ds), d


def discriminator_loss(batch_e, batch_o, p: DiscriminatorParams) -> float:
    p.check_finite()
    xe, xo = _rows(batch_e), _rows(batch_o)
    if len(xe) == 0 or len(xo) == 0:
        raise EmptyBatch("both discriminator batches must be non-empty")
    return discriminator_loss_and_grad(xe, xo, p)[0]


def generator_objective_and_grad(
    x: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    g: GeneratorParams,
    cfg: TrainConfig,
):
    """Weighted batch objective ``mean_b w_b * L_ivm(z_b, y_b)`` and gradient."""
    z, cache = generator_pass(x, g)
    per, dz = ivm_loss_and_grad(z, y, cfg.loss_weights)
    n = len(x)
    dz *= (w / n)[:, None]
    return float(np.sum(w * per) / n), generator_grad(cache, g, dz), per


def score(scorer: Scorer, x: np.ndarray) -> np.ndarray:
    """Discriminator outputs for rows of ``x`` from params, a constant or a callable."""
    if isinstance(scorer, DiscriminatorParams):
        scorer.check_finite()
        return sigmoid(discriminator_pass(x, scorer)[0])
    if callable(scorer):
        return np.asarray(scorer(x), dtype=np.float64)
    return np.full(len(x), float(scorer))


# --- augmentation -------------------------------------------------------------


def _augmented(records: Sequence, idx: np.ndarray, rng: np.random.Generator, cfg: TrainConfig):
    gen, disc, target = [], [], []
    for i in idx:
        r = records[i]
        img, lab = random_crop_resize(r.image, r.heatmap, rng, cfg.aug_scale)
        f = SampleFeatures.extract(img, r.instruction, lab)
        gen.append(f.gen_input)
        disc.append(f.disc_input)
        target.append(f.target)
    return np.array(gen), np.array(disc), np.array(target)


def _check_augmentable(*tables):
    for t in tables:
        if len(t) and not t.records:
            raise ValueError("augmentation needs records, not precomputed arrays")


# --- stage I ------------------------------------------------------------------


def train_stage1_discriminator(
    D_e,
    D_o,
    cfg: TrainConfig = TrainConfig(),
    rng: Optional[np.random.Generator] = None,
    init: Optional[DiscriminatorParams] = None,
) -> Tuple[DiscriminatorParams, List[HistoryRow]]:
    """Fit the discriminator; each batch draws half from D_e and half from D_o."""
    te, to = _table(D_e), _table(D_o)
    if len(te) == 0 or len(to) == 0:
        raise EmptyDataset("stage I needs non-empty D_e and D_o")
    if cfg.augment:
        _check_augmentable(te, to)
    rng = rng if rng is not None else np.random.default_rng([cfg.seed, STAGE1])
    p = init.copy() if init is not None else DiscriminatorParams.init(rng, cfg.hidden)
    state = AdamWState.zeros_like(p.flat)
    half = cfg.batch_size // 2
    history = []
    for step in range(cfg.stage1_steps):
        ie = rng.integers(len(te), size=half)
        io = rng.integers(len(to), size=half)
        if cfg.augment:
            xe, xo = _augmented(te.records, ie, rng, cfg)[1], _augmented(to.records, io, rng, cfg)[1]
        else:
            xe, xo = te.disc[ie], to.disc[io]
        loss, grad, d = discriminator_loss_and_grad(xe, xo, p)
        if not np.isfinite(loss):
            raise NumericalError(f"stage I loss became non-finite at step {step}")
        w = weight_fn(d, cfg)
        history.append(HistoryRow(step, STAGE1, loss, float(np.mean(w[:half])), float(np.mean(w[half:]))))
        adamw_step(p.flat, grad, state, cfg.lr, cfg.betas, cfg.weight_decay)
    return p, history


# --- stage II -----------------------------------------------------------------


def sample_weights(scorer: Scorer, table: FeatureTable, cfg: TrainConfig, constant_weight: Optional[float] = None):
    if len(table) == 0:
        return np.empty(0)
    if constant_weight is not None:
        return np.full(len(table), float(constant_weight))
    return weight_fn(score(scorer, table.disc), cfg)


def train_stage2_generator(
    D_e,
    D_o,
    disc: Optional[Scorer],
    cfg: TrainConfig = TrainConfig(),
    rng: Optional[np.random.Generator] = None,
    *,
    constant_weight: Optional[float] = None,
    weights: Optional[np.ndarray] = None,
    init: Optional[GeneratorParams] = None,
) -> Tuple[GeneratorParams, List[HistoryRow]]:
    """Train the generator on the union with frozen-discriminator weights.

    Batches are drawn uniformly (with replacement) from D_e ∪ D_o.  Sample
    weights ``f(d)`` are computed once up front from the frozen scorer on the
    original (unaugmented) sample.  ``constant_weight=1.0`` with ``disc=None``
    gives plain supervised learning; ``weights`` (one per sample of D_e then
    D_o) bypasses the scorer and the clamp entirely.
    """
    te, to = _table(D_e), _table(D_o)
    n_e, n_o = len(te), len(to)
    if n_e + n_o == 0:
        raise EmptyDataset("stage II needs at least one sample")
    if disc is None and constant_weight is None and weights is None:
        raise ValueError("pass a discriminator, a constant weight or explicit weights")
    if cfg.augment:
        _check_augmentable(te, to)
    rng = rng if rng is not None else np.random.default_rng([cfg.seed, STAGE2])
    g = init.copy() if init is not None else GeneratorParams.init(rng, cfg.hidden)
    state = AdamWState.zeros_like(g.flat)

    parts = [t for t in (te, to) if len(t)]
    x_all = np.vstack([t.gen for t in parts])
    y_all = np.vstack([t.target for t in parts])
    if weights is not None:
        w_all = np.asarray(weights, dtype=np.float64)
        if w_all.shape != (n_e + n_o,) or not np.all(np.isfinite(w_all)) or np.any(w_all < 0):
            raise ValueError("weights must be finite, non-negative, one per sample")
    else:
        w_all = np.concatenate([sample_weights(disc, t, cfg, constant_weight) for t in (te, to)])
    from_e = np.arange(n_e + n_o) < n_e
    records = te.records + to.records if cfg.augment else None

    history = []
    for step in range(cfg.stage2_steps):
        idx = rng.integers(n_e + n_o, size=cfg.batch_size)
        if cfg.augment:
            x, _, y = _augmented(records, idx, rng, cfg)
        else:
            x, y = x_all[idx], y_all[idx]
        w = w_all[idx]
        loss, grad, _ = generator_objective_and_grad(x, y, w, g, cfg)
        if not np.isfinite(loss):
            raise NumericalError(f"stage II loss became non-finite at step {step}")
        mask_e = from_e[idx]
        we = float(np.mean(w[mask_e])) if mask_e.any() else float("nan")
        wo = float(np.mean(w[~mask_e])) if (~mask_e).any() else float("nan")
        history.append(HistoryRow(step, STAGE2, loss, we, wo))
        adamw_step(g.flat, grad, state, cfg.lr, cfg.betas, cfg.weight_decay)
    return g, history


@dataclass
class TrainResult:
    regime: str
    generator: GeneratorParams
    discriminator: Optional[DiscriminatorParams]
    history: List[HistoryRow]


def train_regime(regime: str, D_e, D_o, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Run one of ``dwsl``, ``sl`` (union, f = 1) or ``sl-clean`` (D_e only)."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    te, to = _table(D_e), _table(D_o)
    if regime == "dwsl":
        disc, h1 = train_stage1_discriminator(te, to, cfg)
        gen, h2 = train_stage2_generator(te, to, disc, cfg)
        return TrainResult(regime, gen, disc, h1 + h2)
    if regime == "sl":
        gen, h2 = train_stage2_generator(te, to, None, cfg, constant_weight=1.0)
    else:
        if len(te) == 0:
            raise EmptyDataset("sl-clean needs a non-empty D_e")
        empty = FeatureTable.from_arrays(
            np.empty((0, te.gen.shape[1])), np.empty((0, te.disc.shape[1])), np.empty((0, te.target.shape[1]))
        )
        gen, h2 = train_stage2_generator(te, empty, None, cfg, constant_weight=1.0)
    return TrainResult(regime, gen, None, h2)
