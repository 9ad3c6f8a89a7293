"""Flat training configuration and its structured-text file format."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .losses import LossWeights
from .metrics import SsimParams
from .networks import NetConfig

ABLATIONS = ("no_ssim", "no_id", "no_rec", "no_per", "no_input_label")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lr_decay_start: float = 0.5  # fraction of steps after which lr falls linearly to 0
    batch_size: int = 8
    pretrain_epochs: int = 12
    pretrain_steps_per_epoch: int = 100
    pretrain_lr: float = 1e-3
    pretrain_augment: bool = True  # shared style jitter within each triplet
    pretrain_jitter: float = 3.0  # distortion strength of that jitter
    main_jitter: float = 0.0  # shared style jitter on each training pair; 0 disables
    main_epochs: int = 30
    steps_per_epoch: int = 100
    lambda_cls: float = 5.0
    lambda_ssim: float = 5.0
    lambda_rec: float = 10.0
    lambda_cls_typeface: float | None = None
    lambda_cls_content: float | None = None
    ablation: tuple[str, ...] = ()
    triplet_margin: float = 0.2
    triplet_hinge: bool = True
    pretrain_holdout: int = 2  # contents held out of every training typeface
    ssim_window: str = "gaussian"
    perceptual_reduction: str = "mean"  # "sum" is the plain squared distance
    backbone_widths: tuple[int, ...] = (8, 16, 32, 64, 64, 64)
    generator_widths: tuple[int, ...] = (64, 32, 16, 8)
    mixer_hidden: int = 16
    embed_dim: int = 256
    classifier_steps: int = 400
    log_every: int = 1

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.pretrain_lr <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if not 0.0 <= self.lr_decay_start <= 1.0:
            raise ConfigError("lr_decay_start must be in [0, 1]")
        bad = set(self.ablation) - set(ABLATIONS)
        if bad:
            raise ConfigError(f"unknown ablation flag(s): {sorted(bad)}")
        if len(set(self.ablation)) != len(self.ablation):
            raise ConfigError("duplicate ablation flag")
        for n in ("pretrain_epochs", "main_epochs", "steps_per_epoch", "pretrain_steps_per_epoch", "classifier_steps"):
            if getattr(self, n) < 0:
                raise ConfigError(f"{n} must be >= 0")
        if self.perceptual_reduction not in ("sum", "mean"):
            raise ConfigError("perceptual_reduction must be 'sum' or 'mean'")
        LossWeights(self.lambda_cls, self.lambda_ssim, self.lambda_rec, self.lambda_cls_typeface, self.lambda_cls_content)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_cls, self.lambda_ssim, self.lambda_rec, self.lambda_cls_typeface, self.lambda_cls_content)

    @property
    def ssim_params(self) -> SsimParams:
        return SsimParams(window=self.ssim_window)

    @property
    def total_steps(self) -> int:
        return self.main_epochs * self.steps_per_epoch

    def has(self, flag: str) -> bool:
        return flag in self.ablation

    def net_config(self, n_contents: int, n_typefaces: int, **kw: Any) -> NetConfig:
        return NetConfig(
            n_contents=n_contents,
            n_typefaces=n_typefaces,
            embed_dim=self.embed_dim,
            backbone_widths=tuple(self.backbone_widths),
            generator_widths=tuple(self.generator_widths),
            mixer_hidden=self.mixer_hidden,
            use_input_label="no_input_label" not in self.ablation,
            **kw,
        )

    def with_overrides(self, **kw: Any) -> "TrainConfig":
        return from_dict({**to_dict(self), **kw})


_FIELDS = {f.name: f for f in fields(TrainConfig)}


def to_dict(cfg: TrainConfig) -> dict[str, Any]:
    d = asdict(cfg)
    for k in ("ablation", "backbone_widths", "generator_widths"):
        d[k] = list(d[k])
    return d


def _coerce(name: str, value: Any) -> Any:
    default = _FIELDS[name].default
    if name in ("ablation", "backbone_widths", "generator_widths"):
        if isinstance(value, str):
            value = [v for v in (s.strip() for s in value.split(",")) if v]
        items = tuple(value or ())
        return tuple(int(v) for v in items) if name != "ablation" else tuple(str(v) for v in items)
    if name in ("lambda_cls_typeface", "lambda_cls_content"):
        return None if value in (None, "", "none", "None", "null") else float(value)
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{name}: not a boolean: {value!r}")
        return bool(value)
    if isinstance(default, int):
        try:
            f = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: not an integer: {value!r}") from exc
        if f != int(f):
            raise ConfigError(f"{name}: not an integer: {value!r}")
        return int(f)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: not a number: {value!r}") from exc
    return value


def from_dict(d: dict[str, Any]) -> TrainConfig:
    unknown = set(d) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    try:
        return TrainConfig(**{k: _coerce(k, v) for k, v in d.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> TrainConfig:
    """Read a flat YAML/JSON mapping of TrainConfig fields, then apply overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a flat mapping")
        data.update(loaded)
    data.update(overrides or {})
    return from_dict(data)


def save_config(path: str | Path, cfg: TrainConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n")


def toy_config(**kw: Any) -> TrainConfig:
    """Desk-scale defaults for the 6x10 toy dataset."""
    base = {"pretrain_epochs": 6, "lr": 1e-3}
    return replace(TrainConfig(), **{**base, **kw})


__all__ = ["ABLATIONS", "ConfigError", "TrainConfig", "from_dict", "load_config", "save_config", "to_dict", "toy_config"]
