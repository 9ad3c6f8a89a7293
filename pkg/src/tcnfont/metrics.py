"""SSIM, L1 and the classifier-accuracy evaluation protocol."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor
from torch.nn import functional as F

from .networks import Classifier, NetConfig


@dataclass(frozen=True)
class SsimParams:
    window: str = "gaussian"  # or "global"
    size: int = 11
    sigma: float = 1.5
    dynamic_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self) -> None:
        if self.window not in ("gaussian", "global"):
            raise ValueError(f"unknown SSIM window {self.window!r}")
        if self.window == "gaussian" and (self.size < 1 or self.size % 2 == 0 or self.sigma <= 0):
            raise ValueError("gaussian window needs an odd size >= 1 and sigma > 0")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


DEFAULT_SSIM = SsimParams()
GLOBAL_SSIM = SsimParams(window="global")


def gaussian_window_1d(size: int, sigma: float, dtype=torch.float64) -> Tensor:
    r = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _as_batch(x: Tensor) -> Tensor:
    """Bring (H,W), (C,H,W) or (B,C,H,W) to (B,C,H,W)."""
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[None]
    if x.dim() == 4:
        return x
    raise ValueError(f"expected an image tensor with 2-4 dims, got shape {tuple(x.shape)}")


def ssim_per_image(a: Tensor, b: Tensor, params: SsimParams = DEFAULT_SSIM) -> Tensor:
    """SSIM index of each image pair in the batch, averaged over windows and channels.

    Windowed mode slides a separable Gaussian over valid positions only. The window
    is clipped to the image when the image is smaller than it.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    a, b = _as_batch(a), _as_batch(b)
    c1, c2 = params.c1, params.c2
    if params.window == "global":
        dims = (2, 3)
        mu_a, mu_b = a.mean(dims), b.mean(dims)
        var_a = ((a - mu_a[..., None, None]) ** 2).mean(dims)
        var_b = ((b - mu_b[..., None, None]) ** 2).mean(dims)
        cov = ((a - mu_a[..., None, None]) * (b - mu_b[..., None, None])).mean(dims)
        s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
        return s.mean(dim=1)

    n, ch, h, w = a.shape
    size = min(params.size, h if h % 2 else h - 1, w if w % 2 else w - 1)
    g = gaussian_window_1d(size, params.sigma, dtype=a.dtype).to(a.device)
    stack = torch.cat([a, b, a * a, b * b, a * b], dim=1).reshape(n * 5 * ch, 1, h, w)
    ws = F.conv2d(stack, g.view(1, 1, 1, -1))
    ws = F.conv2d(ws, g.view(1, 1, -1, 1))
    ws = ws.reshape(n, 5, ch, ws.shape[-2], ws.shape[-1])
    mu_a, mu_b, e_aa, e_bb, e_ab = ws.unbind(1)
    var_a = e_aa - mu_a**2
    var_b = e_bb - mu_b**2
    cov = e_ab - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return s.mean(dim=(1, 2, 3))


def ssim(a: Tensor, b: Tensor, params: SsimParams = DEFAULT_SSIM) -> Tensor:
    """Mean SSIM over the batch (differentiable, in [-1, 1])."""
    return ssim_per_image(a, b, params).mean()


def l1_per_image(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    a, b = _as_batch(a), _as_batch(b)
    return (a - b).abs().mean(dim=(1, 2, 3))


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute pixel difference."""
    return l1_per_image(a, b).mean()


@dataclass
class EvalClassifiers:
    """Frozen typeface and content classifiers used to score generated images."""

    typeface: Classifier
    content: Classifier
    accuracy: dict[str, float]

    def freeze(self) -> "EvalClassifiers":
        for clf in (self.typeface, self.content):
            clf.eval()
            clf.requires_grad_(False)
        return self

    @torch.no_grad()
    def predict(self, images: Tensor, batch_size: int = 64) -> tuple[Tensor, Tensor]:
        t, c = [], []
        for i in range(0, len(images), batch_size):
            x = images[i : i + batch_size]
            t.append(self.typeface(x).argmax(1))
            c.append(self.content(x).argmax(1))
        return torch.cat(t), torch.cat(c)


def jitter_params(n: int, gen: torch.Generator, strength: float = 1.0) -> tuple[Tensor, Tensor]:
    """Random affine matrices (n, 2, 3) and morphology codes in [0, 1) for `apply_jitter`."""
    ang = (torch.rand(n, generator=gen) - 0.5) * 0.2 * strength
    scale = 1 + (torch.rand(n, generator=gen) - 0.5) * 0.2 * strength
    shear = (torch.rand(n, generator=gen) - 0.5) * 0.4 * strength
    shift = (torch.rand(n, 2, generator=gen) - 0.5) * 0.16
    cos, sin = torch.cos(ang) / scale, torch.sin(ang) / scale
    theta = torch.zeros(n, 2, 3)
    theta[:, 0, 0] = cos
    theta[:, 0, 1] = -sin + shear
    theta[:, 1, 0] = sin
    theta[:, 1, 1] = cos
    theta[:, :, 2] = shift
    return theta, torch.rand(n, generator=gen)


def apply_jitter(x: Tensor, theta: Tensor, morph: Tensor) -> Tensor:
    """Warp ink-on-white images and thicken (morph < 0.25) or thin (morph > 0.75) strokes."""
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    # background is 1.0: warp the ink map so out-of-range samples stay blank
    y = 1 - F.grid_sample(1 - x, grid, align_corners=False, padding_mode="zeros")
    thick = -F.max_pool2d(-y, 3, 1, 1)
    thin = F.max_pool2d(y, 3, 1, 1)
    y = torch.where((morph < 0.25)[:, None, None, None], thick, y)
    y = torch.where((morph > 0.75)[:, None, None, None], thin, y)
    return y


def _augment(x: Tensor, gen: torch.Generator) -> Tensor:
    return apply_jitter(x, *jitter_params(x.shape[0], gen))


def train_classifier(
    images: Tensor,
    labels: Tensor,
    n_classes: int,
    net_config: NetConfig,
    steps: int = 300,
    batch_size: int = 16,
    lr: float = 1e-3,
    seed: int = 0,
    augment: bool = True,
) -> Classifier:
    """Cross-entropy training of a ResNet classifier on real images (Adam, beta1=0.5)."""
    if len(torch.unique(labels)) < 2:
        raise ValueError("degenerate classifier split: fewer than two classes present")
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    clf = Classifier(net_config.image_channels, net_config.backbone_widths, n_classes, net_config.latent_dim)
    opt = torch.optim.Adam(clf.parameters(), lr=lr, betas=(0.5, 0.999))
    clf.train()
    for step in range(steps):
        idx = torch.randint(len(images), (batch_size,), generator=gen)
        x = images[idx]
        if augment:
            x = _augment(x, gen)
        for group in opt.param_groups:
            group["lr"] = lr * min(1.0, 2 * (steps - step) / steps)
        loss = F.cross_entropy(clf(x), labels[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
    clf.eval()
    return clf


def _accuracy(clf: Classifier, images: Tensor, labels: Tensor) -> float:
    with torch.no_grad():
        pred = torch.cat([clf(images[i : i + 64]).argmax(1) for i in range(0, len(images), 64)])
    return float((pred == labels).float().mean())


def train_eval_classifiers(
    images: Tensor,
    typeface_ids: Tensor,
    content_ids: Tensor,
    net_config: NetConfig,
    holdout: Tensor | None = None,
    steps: int = 300,
    seed: int = 0,
) -> EvalClassifiers:
    """Train both evaluation classifiers on real images of one split.

    `holdout` is a boolean mask of images kept out of training and used to report
    accuracy; without it accuracy is measured on the training images.
    """
    if len(images) == 0:
        raise ValueError("empty classifier split")
    if holdout is None:
        holdout = torch.zeros(len(images), dtype=torch.bool)
    fit = ~holdout
    # slant and stroke weight are typeface cues, so the style classifier trains on unjittered images
    tf = train_classifier(images[fit], typeface_ids[fit], net_config.n_typefaces, net_config, steps, seed=seed, augment=False)
    ct = train_classifier(images[fit], content_ids[fit], net_config.n_contents, net_config, steps, seed=seed + 1)
    ev = holdout if holdout.any() else fit
    acc = {
        "typeface": _accuracy(tf, images[ev], typeface_ids[ev]),
        "content": _accuracy(ct, images[ev], content_ids[ev]),
    }
    return EvalClassifiers(tf, ct, acc).freeze()


def score_outputs(
    generated: Tensor,
    targets: Tensor,
    source_typefaces: Tensor,
    target_contents: Tensor,
    clf: EvalClassifiers | None = None,
    params: SsimParams = DEFAULT_SSIM,
) -> dict[str, float]:
    """Mean SSIM, mean L1, and (with classifiers) typeface/content accuracy.

    Typeface accuracy is measured against the source image's typeface, content
    accuracy against the target's content.
    """
    if len(generated) == 0:
        raise ValueError("nothing to score")
    if generated.shape != targets.shape:
        raise ValueError(f"shape mismatch: {tuple(generated.shape)} vs {tuple(targets.shape)}")
    with torch.no_grad():
        s = torch.cat([ssim_per_image(generated[i : i + 64], targets[i : i + 64], params) for i in range(0, len(generated), 64)])
        l1 = l1_per_image(generated, targets)
    report = {"ssim": float(s.mean()), "l1": float(l1.mean()), "n": int(len(generated))}
    if clf is not None:
        pt, pc = clf.predict(generated)
        report["typeface_acc"] = float((pt == source_typefaces).float().mean())
        report["content_acc"] = float((pc == target_contents).float().mean())
    return report


TABLE_COLUMNS = ("ssim", "l1", "typeface_acc", "content_acc")
_HEADERS = {"ssim": "SSIM", "l1": "L1", "typeface_acc": "Style Accuracy", "content_acc": "Content Accuracy"}


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return f"{v:.4f}"


def format_table(reports: dict[str, dict[str, dict[str, float]]]) -> str:
    """Plain-text table: one row per model, columns metric x subtask (completion, reconstruction)."""
    tasks = ("completion", "reconstruction")
    header = ["model"] + [f"{_HEADERS[m]} ({t[:4]})" for m in TABLE_COLUMNS for t in tasks]
    rows = [header]
    for name, rep in reports.items():
        rows.append([name] + [_fmt(rep.get(t, {}).get(m)) for m in TABLE_COLUMNS for t in tasks])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def write_report(path: str | Path, report: dict) -> None:
    """Write a metric report as sorted JSON (byte-stable for equal inputs)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_round(report), indent=2, sort_keys=True) + "\n")


def _round(obj):
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return round(float(obj), 8)
    return obj
