"""One-hidden-layer generator and discriminator with hand-written backprop.

Parameters live in a single flat float64 vector; the named weight matrices
are views into it.  That keeps the optimizer, serialization and finite
difference checks trivial.
"""
from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from ..errors import NonFiniteParams
from .features import DISC_IN, GEN_IN, OUT_DIM
from .losses import sigmoid

DEFAULT_HIDDEN = 64


class FlatParams:
    """Named array views over one contiguous parameter vector."""

    layout: Tuple[Tuple[str, Tuple[int, ...]], ...] = ()

    def __init__(self, flat: np.ndarray):
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != self.size_of(self.layout):
            raise ValueError(f"expected {self.size_of(self.layout)} parameters, got {flat.size}")
        self.flat = flat
        self._views: Dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self.layout:
            n = int(np.prod(shape))
            self._views[name] = flat[offset : offset + n].reshape(shape)
            offset += n

    @staticmethod
    def size_of(layout) -> int:
        return sum(int(np.prod(s)) for _, s in layout)

    def __getattr__(self, name):
        views = self.__dict__.get("_views")
        if views is not None and name in views:
            return views[name]
        raise AttributeError(name)

    def copy(self):
        return type(self)(self.flat.copy(), **self._init_kwargs())

    def _init_kwargs(self):
        return {}

    def check_finite(self):
        if not np.all(np.isfinite(self.flat)):
            raise NonFiniteParams(f"{type(self).__name__} contains non-finite values")

    def __len__(self):
        return self.flat.size


class GeneratorParams(FlatParams):
    """``W1 (h, 576), b1 (h), W2 (1024, h), b2 (1024)``."""

    def __init__(self, flat: np.ndarray, hidden: int = DEFAULT_HIDDEN):
        self.hidden = hidden
        self.layout = (
            ("W1", (hidden, GEN_IN)),
            ("b1", (hidden,)),
            ("W2", (OUT_DIM, hidden)),
            ("b2", (OUT_DIM,)),
        )
        super().__init__(flat)

    def _init_kwargs(self):
        return {"hidden": self.hidden}

    @classmethod
    def zeros(cls, hidden: int = DEFAULT_HIDDEN) -> "GeneratorParams":
        return cls(np.zeros(hidden * (GEN_IN + 1) + OUT_DIM * (hidden + 1)), hidden)

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = DEFAULT_HIDDEN) -> "GeneratorParams":
        p = cls.zeros(hidden)
        p.W1[:] = rng.normal(0.0, np.sqrt(2.0 / GEN_IN), p.W1.shape)
        p.W2[:] = rng.normal(0.0, np.sqrt(1.0 / hidden), p.W2.shape)
        return p


class DiscriminatorParams(FlatParams):
    """``V1 (h, 71), c1 (h), v2 (h), c2 (1)``."""

    def __init__(self, flat: np.ndarray, hidden: int = DEFAULT_HIDDEN):
        self.hidden = hidden
        self.layout = (
            ("V1", (hidden, DISC_IN)),
            ("c1", (hidden,)),
            ("v2", (hidden,)),
            ("c2", (1,)),
        )
        super().__init__(flat)

    def _init_kwargs(self):
        return {"hidden": self.hidden}

    @classmethod
    def zeros(cls, hidden: int = DEFAULT_HIDDEN) -> "DiscriminatorParams":
        return cls(np.zeros(hidden * (DISC_IN + 2) + 1), hidden)

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = DEFAULT_HIDDEN) -> "DiscriminatorParams":
        p = cls.zeros(hidden)
        p.V1[:] = rng.normal(0.0, np.sqrt(2.0 / DISC_IN), p.V1.shape)
        p.v2[:] = rng.normal(0.0, np.sqrt(1.0 / hidden), p.v2.shape)
        return p


def _as_batch(x: np.ndarray, dim: int) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"expected inputs of width {dim}, got {x.shape[1]}")
    return x, single


# --- generator ----------------------------------------------------------------


def generator_pass(xb: np.ndarray, g: GeneratorParams):
    """Batched forward without validation; returns ``(logits, cache)``."""
    pre = xb @ g.W1.T + g.b1
    a = np.maximum(pre, 0.0)
    return a @ g.W2.T + g.b2, (xb, pre, a)


def generator_grad(cache, g: GeneratorParams, dz: np.ndarray) -> np.ndarray:
    """Flat parameter gradient from ``dL/dz`` (batch scaling already applied)."""
    xb, pre, a = cache
    grad = GeneratorParams.zeros(g.hidden)
    grad.W2[:] = dz.T @ a
    grad.b2[:] = dz.sum(axis=0)
    da = (dz @ g.W2) * (pre > 0)
    grad.W1[:] = da.T @ xb
    grad.b1[:] = da.sum(axis=0)
    return grad.flat


def generator_logits(x: np.ndarray, g: GeneratorParams) -> np.ndarray:
    """Logits for generator input rows; shape ``(B, 1024)`` or ``(1024,)``."""
    g.check_finite()
    xb, single = _as_batch(x, GEN_IN)
    z, _ = generator_pass(xb, g)
    return z[0] if single else z


def generator_forward(x: np.ndarray, g: GeneratorParams) -> np.ndarray:
    """Single-sample 32x32 logit map."""
    return generator_logits(x, g).reshape(32, 32)


def generator_backward(x: np.ndarray, g: GeneratorParams, dz: np.ndarray) -> np.ndarray:
    xb, _ = _as_batch(x, GEN_IN)
    _, cache = generator_pass(xb, g)
    return generator_grad(cache, g, np.atleast_2d(dz))


# --- discriminator ------------------------------------------------------------


def discriminator_pass(xb: np.ndarray, p: DiscriminatorParams):
    pre = xb @ p.V1.T + p.c1
    a = np.maximum(pre, 0.0)
    return a @ p.v2 + p.c2[0], (xb, pre, a)


def discriminator_grad(cache, p: DiscriminatorParams, ds: np.ndarray) -> np.ndarray:
    xb, pre, a = cache
    grad = DiscriminatorParams.zeros(p.hidden)
    grad.v2[:] = ds @ a
    grad.c2[0] = ds.sum()
    da = np.outer(ds, p.v2) * (pre > 0)
    grad.V1[:] = da.T @ xb
    grad.c1[:] = da.sum(axis=0)
    return grad.flat


def discriminator_logit(x: np.ndarray, p: DiscriminatorParams):
    p.check_finite()
    xb, single = _as_batch(x, DISC_IN)
    s, _ = discriminator_pass(xb, p)
    return s[0] if single else s


def discriminator_forward(x: np.ndarray, p: DiscriminatorParams):
    """Quality score ``d`` in (0, 1) for discriminator input rows."""
    return sigmoid(discriminator_logit(x, p))


def discriminator_backward(x: np.ndarray, p: DiscriminatorParams, ds: np.ndarray) -> np.ndarray:
    xb, _ = _as_batch(x, DISC_IN)
    _, cache = discriminator_pass(xb, p)
    return discriminator_grad(cache, p, np.atleast_1d(ds))
