"""Training configuration, presets and flat TOML (de)serialisation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Tuple, Union

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from .losses import LossWeights


@dataclass(frozen=True)
class TrainConfig:
    lambda_bce: float = 1.0
    lambda_dice: float = 1.0
    f_floor: float = 0.1
    f_ceil: float = 1.0
    lr: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.95)
    weight_decay: float = 0.0
    batch_size: int = 32
    stage1_steps: int = 2000
    stage2_steps: int = 8000
    seed: int = 0
    augment: bool = False
    aug_scale: Tuple[float, float] = (0.6, 1.0)
    hidden: int = 64

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "aug_scale", tuple(float(s) for s in self.aug_scale))
        if self.lambda_bce < 0 or self.lambda_dice < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 <= self.f_floor <= self.f_ceil:
            raise ValueError("need 0 <= f_floor <= f_ceil")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ValueError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be an even number >= 2")
        if self.stage1_steps < 0 or self.stage2_steps < 0:
            raise ValueError("step counts must be non-negative")
        lo, hi = self.aug_scale
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"aug_scale must satisfy 0 < lo <= hi <= 1, got {self.aug_scale}")
        if self.hidden < 1:
            raise ValueError("hidden must be positive")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_bce, self.lambda_dice)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        d["aug_scale"] = list(self.aug_scale)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


PRESETS: Dict[str, TrainConfig] = {
    "toy": TrainConfig(),
    # optimiser settings used for the large-model run; lr stalls the toy nets
    "paper": TrainConfig(lr=1e-5, betas=(0.9, 0.95), weight_decay=0.0, batch_size=32, augment=True),
}


def load_config(path: Union[str, Path], **overrides) -> TrainConfig:
    """Read a flat TOML file; an optional ``preset = "paper"`` key picks the base."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    base = PRESETS[data.pop("preset", "toy")]
    merged = {**base.to_dict(), **data, **{k: v for k, v in overrides.items() if v is not None}}
    return TrainConfig.from_dict(merged)


def dump_config(cfg: TrainConfig, path: Union[str, Path]) -> None:
    with open(path, "wb") as fh:
        tomli_w.dump(cfg.to_dict(), fh)
