"""Loss terms and weighted totals.

Every function here takes batched tensors and returns a scalar tensor (the batch
mean). Real/fake and class outputs are passed as logits, which is what the
networks emit; the probability views live on `DiscriminatorOutput`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import torch
from torch import Tensor
from torch.nn import functional as F

from .metrics import DEFAULT_SSIM, SsimParams, l1_distance, ssim
from .networks import DiscriminatorOutput

_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 5.0
    lambda_ssim: float = 5.0
    lambda_rec: float = 10.0
    lambda_cls_typeface: float | None = None
    lambda_cls_content: float | None = None

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and v < 0:
                raise ValueError(f"{f.name} must be >= 0, got {v}")

    @property
    def cls_split(self) -> tuple[float, float]:
        t = self.lambda_cls if self.lambda_cls_typeface is None else self.lambda_cls_typeface
        c = self.lambda_cls if self.lambda_cls_content is None else self.lambda_cls_content
        return t, c


GENERATOR_TERMS = ("id", "ssim", "gan_g", "cls_g", "rec", "per")


@dataclass
class LossReport:
    """Per-term loss values of one step; absent terms are None."""

    pretrain_cls_t: float | None = None
    pretrain_cls_c: float | None = None
    triplet_t: float | None = None
    triplet_c: float | None = None
    pretrain_rec: float | None = None
    id: float | None = None
    ssim: float | None = None
    gan_g: float | None = None
    cls_g: float | None = None
    cls_g_t: float | None = None
    cls_g_c: float | None = None
    rec: float | None = None
    per: float | None = None
    total_g: float | None = None
    d_tf_real: float | None = None
    d_tf_fake: float | None = None
    d_cls_t: float | None = None
    d_cls_c: float | None = None
    total_d: float | None = None
    extra: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_terms(cls, terms: dict[str, Tensor | float]) -> "LossReport":
        known = {f.name for f in fields(cls)} - {"extra"}
        rep = cls()
        for k, v in terms.items():
            val = float(v.detach()) if isinstance(v, Tensor) else float(v)
            if k in known:
                setattr(rep, k, val)
            else:
                rep.extra[k] = val
        return rep

    def to_dict(self) -> dict[str, float]:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}
        out = {k: v for k, v in out.items() if v is not None}
        out.update(self.extra)
        return out

    def values(self) -> list[float]:
        return list(self.to_dict().values())

    def all_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values())


def pretrain_classification_loss(logits: Tensor, labels: Tensor) -> Tensor:
    """Softmax cross-entropy of an encoder's classifier head."""
    n = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= n):
        raise IndexError(f"label out of range for a {n}-way head")
    return F.cross_entropy(logits, labels)


def _dist(a: Tensor, b: Tensor) -> Tensor:
    return torch.sqrt(((a - b) ** 2).sum(dim=-1) + _EPS)


def triplet_loss(anchor: Tensor, pos: Tensor, neg: Tensor, margin: float = 0.2, hinge: bool = True) -> Tensor:
    """max(0, |a-p| - |a-n| + margin); the raw difference when hinge is off."""
    if not (anchor.shape == pos.shape == neg.shape):
        raise ValueError("triplet members must have equal shapes")
    diff = _dist(anchor, pos) - _dist(anchor, neg) + margin
    if hinge:
        diff = diff.clamp_min(0)
    return diff.mean()


def identity_loss(x: Tensor, x_hat_same: Tensor) -> Tensor:
    return l1_distance(x, x_hat_same)


def cycle_reconstruction_loss(x: Tensor, x_tilde: Tensor) -> Tensor:
    return l1_distance(x, x_tilde)


def pretrain_reconstruction_loss(x: Tensor, decoded: Tensor) -> Tensor:
    return l1_distance(x, decoded)


def ssim_loss(x_tgt: Tensor, x_hat: Tensor, params: SsimParams = DEFAULT_SSIM) -> Tensor:
    """L1 minus SSIM; equals -1 exactly when the images coincide."""
    return l1_distance(x_tgt, x_hat) - ssim(x_tgt, x_hat, params)


def adversarial_generator_loss(tf_logit_fake: Tensor) -> Tensor:
    """Binary CE of the fake image's real/fake output against the 'real' label."""
    return F.binary_cross_entropy_with_logits(tf_logit_fake, torch.ones_like(tf_logit_fake))


def auxiliary_classification_loss(
    t_logits: Tensor | None,
    c_logits: Tensor,
    l_t: Tensor | None,
    l_c: Tensor,
) -> tuple[Tensor, Tensor]:
    """Typeface CE against the source typeface and content CE against the target content.

    Returns the two terms separately so callers can weight them; without a
    typeface head the typeface term is zero.
    """
    ce_c = F.cross_entropy(c_logits, l_c)
    if t_logits is None or l_t is None:
        return torch.zeros((), dtype=c_logits.dtype), ce_c
    return F.cross_entropy(t_logits, l_t), ce_c


def perceptual_reconstruction_loss(
    features: tuple[Tensor, ...],
    features_tilde: tuple[Tensor, ...],
    reduction: str = "sum",
) -> Tensor:
    """Sum over encoders of squared Euclidean feature distance, averaged over the batch.

    With reduction="mean" each distance is divided by the feature width, which
    keeps the term on the scale of the pixel losses it is weighted with.
    """
    if len(features) != len(features_tilde):
        raise ValueError("feature tuples differ in length")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    total = torch.zeros((), dtype=features[0].dtype)
    for h, h_t in zip(features, features_tilde):
        d = ((h - h_t) ** 2).sum(dim=-1)
        if reduction == "mean":
            d = d / h.shape[-1]
        total = total + d.mean()
    return total


def generator_total(terms: dict[str, Tensor | float], w: LossWeights) -> Tensor | float:
    """L_gan + cls weights * L_cls + lambda_ssim * L_ssim + lambda_rec * (L_rec + L_per + L_id).

    Missing terms (ablated) contribute nothing. The classification term uses the
    typeface/content split when `cls_g_t` / `cls_g_c` are given, else `cls_g`.
    """
    total: Tensor | float = 0.0
    if "gan_g" in terms:
        total = total + terms["gan_g"]
    if "cls_g_t" in terms or "cls_g_c" in terms:
        lt, lc = w.cls_split
        total = total + lt * terms.get("cls_g_t", 0.0) + lc * terms.get("cls_g_c", 0.0)
    elif "cls_g" in terms:
        total = total + w.lambda_cls * terms["cls_g"]
    if "ssim" in terms:
        total = total + w.lambda_ssim * terms["ssim"]
    rec = sum(terms[k] for k in ("rec", "per", "id") if k in terms)
    return total + w.lambda_rec * rec


def discriminator_terms(
    out_real: DiscriminatorOutput,
    out_fake: DiscriminatorOutput,
    l_t: Tensor | None,
    l_c: Tensor,
) -> dict[str, Tensor]:
    """Real/fake BCE on both inputs; typeface/content CE on the real image only."""
    terms = {
        "d_tf_real": F.binary_cross_entropy_with_logits(out_real.tf_logit, torch.ones_like(out_real.tf_logit)),
        "d_tf_fake": F.binary_cross_entropy_with_logits(out_fake.tf_logit, torch.zeros_like(out_fake.tf_logit)),
        "d_cls_c": F.cross_entropy(out_real.c_logits, l_c),
    }
    if out_real.t_logits is not None and l_t is not None:
        terms["d_cls_t"] = F.cross_entropy(out_real.t_logits, l_t)
    return terms


def discriminator_total(terms: dict[str, Tensor | float]) -> Tensor | float:
    return sum(terms[k] for k in ("d_tf_real", "d_tf_fake", "d_cls_t", "d_cls_c") if k in terms)


def discriminator_loss(
    out_real: DiscriminatorOutput,
    out_fake: DiscriminatorOutput,
    l_t: Tensor | None,
    l_c: Tensor,
) -> Tensor:
    return discriminator_total(discriminator_terms(out_real, out_fake, l_t, l_c))
