"""scikit-learn style wrappers around the two training stages.

Both estimators take precomputed feature rows (see :mod:`ivmask.dwsl.features`)
so they compose with ordinary sklearn tooling such as ``clone`` and
``get_params``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import EmptyDataset
from .config import TrainConfig
from .features import DISC_IN, GEN_IN, OUT_DIM, FeatureTable
from .losses import sigmoid
from .networks import generator_logits
from .train import score, train_stage1_discriminator, train_stage2_generator, weight_fn


def _check_width(X, width: int, what: str):
    if X.shape[1] != width:
        raise ValueError(f"{what} rows must have {width} features, got {X.shape[1]}")


class QualityDiscriminator(ClassifierMixin, BaseEstimator):
    """Stage I: tell trusted labels (``y = 1``) from machine labels (``y = 0``).

    ``X`` holds discriminator input rows.  ``sample_weight`` is not a fit
    argument; instead :meth:`loss_weights` maps rows to ``f(d)``.
    """

    def __init__(self, hidden=64, lr=1e-3, betas=(0.9, 0.95), weight_decay=0.0, batch_size=32, steps=2000, f_floor=0.1, f_ceil=1.0, seed=0):
        self.hidden = hidden
        self.lr = lr
        self.betas = betas
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.steps = steps
        self.f_floor = f_floor
        self.f_ceil = f_ceil
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden=self.hidden, lr=self.lr, betas=self.betas, weight_decay=self.weight_decay,
            batch_size=self.batch_size, stage1_steps=self.steps, f_floor=self.f_floor,
            f_ceil=self.f_ceil, seed=self.seed,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        _check_width(X, DISC_IN, "discriminator")
        y = np.asarray(y).astype(bool)
        if y.all() or not y.any():
            raise EmptyDataset("need both trusted (1) and machine (0) rows")
        cfg = self._config()
        te = FeatureTable.from_arrays(np.zeros((y.sum(), GEN_IN)), X[y], np.zeros((y.sum(), OUT_DIM)))
        to = FeatureTable.from_arrays(np.zeros(((~y).sum(), GEN_IN)), X[~y], np.zeros(((~y).sum(), OUT_DIM)))
        self.params_, self.history_ = train_stage1_discriminator(te, to, cfg)
        self.classes_ = np.array([0, 1])
        self.config_ = cfg
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        _check_width(X, DISC_IN, "discriminator")
        d = score(self.params_, X)
        return np.column_stack([1.0 - d, d])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def loss_weights(self, X):
        """Per-row training weights ``f(d)``."""
        return weight_fn(self.predict_proba(X)[:, 1], self.config_)


class DWSLSegmenter(BaseEstimator):
    """Stage II generator fitted on weighted rows.

    ``fit(X, Y, sample_weight)`` with ``X`` generator input rows, ``Y`` 32x32
    targets flattened to 1024 columns and weights such as
    :meth:`QualityDiscriminator.loss_weights`.  Without weights it is plain
    supervised learning.
    """

    def __init__(self, hidden=64, lr=1e-3, betas=(0.9, 0.95), weight_decay=0.0, batch_size=32, steps=8000, lambda_bce=1.0, lambda_dice=1.0, seed=0):
        self.hidden = hidden
        self.lr = lr
        self.betas = betas
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.steps = steps
        self.lambda_bce = lambda_bce
        self.lambda_dice = lambda_dice
        self.seed = seed

    def fit(self, X, Y, sample_weight=None):
        X, Y = check_X_y(X, Y, dtype=np.float64, multi_output=True)
        _check_width(X, GEN_IN, "generator")
        Y = np.atleast_2d(Y)
        if Y.shape[1] != OUT_DIM or Y.min() < 0 or Y.max() > 1:
            raise ValueError(f"targets must be {OUT_DIM} values in [0, 1] per row")
        cfg = TrainConfig(
            hidden=self.hidden, lr=self.lr, betas=self.betas, weight_decay=self.weight_decay,
            batch_size=self.batch_size, stage2_steps=self.steps, lambda_bce=self.lambda_bce,
            lambda_dice=self.lambda_dice, seed=self.seed,
        )
        n = len(X)
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        empty = FeatureTable.from_arrays(np.empty((0, GEN_IN)), np.empty((0, DISC_IN)), np.empty((0, OUT_DIM)))
        rows = FeatureTable.from_arrays(X, np.zeros((n, DISC_IN)), Y)
        self.params_, self.history_ = train_stage2_generator(empty, rows, None, cfg, weights=w)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        _check_width(X, GEN_IN, "generator")
        return sigmoid(generator_logits(X, self.params_))

    def predict(self, X):
        """Binary masks, ``p >= 0.5``."""
        return self.predict_proba(X) >= 0.5

    def score(self, X, Y):
        """Mean IoU against targets activated where > 0."""
        pred = self.predict(X)
        gt = np.asarray(Y) > 0
        inter = np.sum(pred & gt, axis=1)
        union = np.sum(pred | gt, axis=1)
        return float(np.mean(np.where(union == 0, 1.0, inter / np.maximum(union, 1))))
