"""Discriminator-weighted supervised learning on toy networks."""
from .config import PRESETS, TrainConfig, dump_config, load_config
from .estimators import DWSLSegmenter, QualityDiscriminator
from .features import FeatureTable, SampleFeatures
from .gradcheck import grad_check, run_trials
from .losses import LossWeights, bce_from_logits, dice_loss, ivm_loss
from .networks import (
    DiscriminatorParams,
    GeneratorParams,
    discriminator_forward,
    generator_forward,
)
from .optim import AdamWState, adamw_step
from .train import (
    HistoryRow,
    TrainResult,
    discriminator_loss,
    train_regime,
    train_stage1_discriminator,
    train_stage2_generator,
    weight_fn,
)

__all__ = [
    "AdamWState",
    "DWSLSegmenter",
    "DiscriminatorParams",
    "FeatureTable",
    "GeneratorParams",
    "HistoryRow",
    "LossWeights",
    "PRESETS",
    "QualityDiscriminator",
    "SampleFeatures",
    "TrainConfig",
    "TrainResult",
    "adamw_step",
    "bce_from_logits",
    "dice_loss",
    "discriminator_forward",
    "discriminator_loss",
    "dump_config",
    "generator_forward",
    "grad_check",
    "ivm_loss",
    "load_config",
    "run_trials",
    "train_regime",
    "train_stage1_discriminator",
    "train_stage2_generator",
    "weight_fn",
]
