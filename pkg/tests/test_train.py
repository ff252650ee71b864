import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivmask.dwsl.config import TrainConfig
from ivmask.dwsl.features import FeatureTable
from ivmask.dwsl.networks import DiscriminatorParams, GeneratorParams
from ivmask.dwsl.train import (
    REGIMES,
    generator_objective_and_grad,
    score,
    train_regime,
    train_stage1_discriminator,
    train_stage2_generator,
    weight_fn,
)
from ivmask.errors import EmptyDataset, NumericalError
from ivmask.io import history_csv
from ivmask.synth import build_mixed_dataset

SMALL = TrainConfig(hidden=16, stage1_steps=300, stage2_steps=60, seed=3)


@pytest.fixture(scope="module")
def data():
    ds = build_mixed_dataset(11, n_e=30, n_o=240, corruption_rate=0.5)
    return ds, FeatureTable(ds.clean), FeatureTable(ds.mixed)


def test_weight_fn_examples():
    for x, want in [(-1, 0.1), (0, 0.1), (0.05, 0.1), (0.1, 0.1), (0.5, 0.5), (1, 1.0), (2.0, 1.0)]:
        assert weight_fn(x) == want
    cfg = TrainConfig(f_floor=0.2, f_ceil=0.8)
    assert weight_fn(np.array([0.0, 0.5, 0.9]), cfg).tolist() == [0.2, 0.5, 0.8]


@given(st.lists(st.floats(allow_nan=False, allow_infinity=True), min_size=1, max_size=50))
def test_weight_fn_range_and_monotone(xs):
    w = weight_fn(np.sort(np.array(xs)))
    assert np.all((w >= 0.1) & (w <= 1.0))
    assert np.all(np.diff(w) >= 0)


def test_zero_steps_returns_init(data):
    _, te, to = data
    init = DiscriminatorParams.init(np.random.default_rng(0), 16)
    p, hist = train_stage1_discriminator(te, to, SMALL.replace(stage1_steps=0), init=init)
    assert np.array_equal(p.flat, init.flat) and hist == []
    g0 = GeneratorParams.init(np.random.default_rng(0), 16)
    g, hist = train_stage2_generator(te, to, 1.0, SMALL.replace(stage2_steps=0), init=g0)
    assert np.array_equal(g.flat, g0.flat) and hist == []


def test_stage1_learns_to_separate(data):
    ds, te, to = data
    p, hist = train_stage1_discriminator(te, to, SMALL)
    losses = [h.loss for h in hist]
    assert all(math.isfinite(x) for x in losses)
    assert abs(losses[0] - 2 * math.log(2)) < 0.2
    assert np.mean(losses[-20:]) < np.mean(losses[:20])
    corrupted = np.array([not r.meta["is_clean"] for r in ds.mixed])
    gap = score(p, te.disc).mean() - score(p, to.disc[corrupted]).mean()
    assert gap > 0.3


def test_constant_one_discriminator_is_plain_sl(data):
    _, te, to = data
    _, h_dwsl = train_stage2_generator(te, to, 1.0, SMALL)
    _, h_sl = train_stage2_generator(te, to, None, SMALL, constant_weight=1.0)
    for a, b in zip(h_dwsl, h_sl):
        assert abs(a.loss - b.loss) < 1e-12


def test_constant_zero_discriminator_scales_gradient(rng):
    cfg = TrainConfig(hidden=8)
    g = GeneratorParams.init(rng, 8)
    x, y = rng.random((6, 576)), (rng.random((6, 1024)) > 0.7).astype(float)
    w0 = weight_fn(score(0.0, np.zeros((6, 71))), cfg)
    assert np.all(w0 == 0.1)
    l1, g1, _ = generator_objective_and_grad(x, y, np.ones(6), g, cfg)
    l0, g0, _ = generator_objective_and_grad(x, y, w0, g, cfg)
    assert abs(l0 - 0.1 * l1) < 1e-12
    assert np.allclose(g0, 0.1 * g1, rtol=1e-12, atol=1e-18)


def test_stage2_loss_decreases(data):
    _, te, to = data
    _, hist = train_stage2_generator(te, to, 1.0, SMALL.replace(stage2_steps=200))
    losses = np.array([h.loss for h in hist])
    assert np.all(np.isfinite(losses))
    assert losses[-20:].mean() < losses[:20].mean()


def test_training_is_deterministic(data):
    _, te, to = data
    a = train_regime("dwsl", te, to, SMALL)
    b = train_regime("dwsl", te, to, SMALL)
    assert a.generator.flat.tobytes() == b.generator.flat.tobytes()
    assert a.discriminator.flat.tobytes() == b.discriminator.flat.tobytes()
    assert history_csv(a.history) == history_csv(b.history)
    c = train_regime("dwsl", te, to, SMALL.replace(seed=4))
    assert c.generator.flat.tobytes() != a.generator.flat.tobytes()


def test_regimes(data):
    _, te, to = data
    for regime in REGIMES:
        res = train_regime(regime, te, to, SMALL)
        assert (res.discriminator is not None) == (regime == "dwsl")
        stages = {h.stage for h in res.history}
        assert stages == ({1, 2} if regime == "dwsl" else {2})
    clean_only = train_regime("sl-clean", te, to, SMALL)
    assert all(math.isnan(h.mean_weight_o) for h in clean_only.history)
    with pytest.raises(ValueError):
        train_regime("gan", te, to, SMALL)


def test_empty_inputs(data):
    _, te, to = data
    empty = FeatureTable.from_arrays(np.empty((0, 576)), np.empty((0, 71)), np.empty((0, 1024)))
    with pytest.raises(EmptyDataset):
        train_stage1_discriminator(te, empty, SMALL)
    with pytest.raises(EmptyDataset):
        train_stage2_generator(empty, empty, 1.0, SMALL)
    with pytest.raises(EmptyDataset):
        train_regime("sl-clean", empty, to, SMALL)


def test_explicit_weights_validated(data):
    _, te, to = data
    n = len(te) + len(to)
    with pytest.raises(ValueError):
        train_stage2_generator(te, to, None, SMALL, weights=np.ones(n - 1))
    with pytest.raises(ValueError):
        train_stage2_generator(te, to, None, SMALL, weights=np.full(n, np.inf))
    with pytest.raises(ValueError):
        train_stage2_generator(te, to, None, SMALL)


def test_non_finite_loss_raises(data):
    _, te, to = data
    bad = GeneratorParams.zeros(16)
    bad.b2[0] = np.nan
    with pytest.raises(NumericalError):
        train_stage2_generator(te, to, 1.0, SMALL, init=bad)


def test_augmented_training_runs(data):
    ds, _, _ = data
    cfg = SMALL.replace(augment=True, stage1_steps=3, stage2_steps=3)
    res = train_regime("dwsl", ds.clean[:5], ds.mixed[:10], cfg)
    assert len(res.history) == 6 and all(math.isfinite(h.loss) for h in res.history)
    arrays_only = FeatureTable.from_arrays(np.zeros((2, 576)), np.zeros((2, 71)), np.zeros((2, 1024)))
    with pytest.raises(ValueError):
        train_stage1_discriminator(arrays_only, arrays_only, cfg)
