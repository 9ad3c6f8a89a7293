"""Typeface completion: generate a whole character set in the style of one glyph."""

from .completion import CompletionRequest, StyleDomainLabel, complete_typeface, reconstruct, style_transfer, weighted_style_embedding
from .config import TrainConfig, load_config, toy_config
from .losses import LossReport, LossWeights
from .metrics import l1_distance, ssim
from .networks import ModelBundle, NetConfig, count_parameters, load_bundle, save_bundle
from .training import pretrain_encoders, train, train_unpaired

__version__ = "0.1.0"

__all__ = [
    "CompletionRequest",
    "LossReport",
    "LossWeights",
    "ModelBundle",
    "NetConfig",
    "StyleDomainLabel",
    "TrainConfig",
    "complete_typeface",
    "count_parameters",
    "l1_distance",
    "load_bundle",
    "load_config",
    "pretrain_encoders",
    "reconstruct",
    "save_bundle",
    "ssim",
    "style_transfer",
    "toy_config",
    "train",
    "train_unpaired",
    "weighted_style_embedding",
]
