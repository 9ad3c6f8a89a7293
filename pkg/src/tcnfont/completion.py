"""Inference: typeface completion, reconstruction and unpaired style transfer."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from .glyphdata import GlyphImage, GlyphSet, save_png
from .metrics import DEFAULT_SSIM, EvalClassifiers, SsimParams, score_outputs
from .networks import ConfigMismatchError, ModelBundle


@dataclass
class CompletionRequest:
    source: GlyphImage
    source_content: int
    targets: list[int] | None = None  # default: every content but the source
    n_contents: int | None = None

    def resolve_targets(self, n_contents: int) -> list[int]:
        if self.n_contents is not None and self.n_contents != n_contents:
            raise ConfigMismatchError(f"request is for N={self.n_contents}, bundle has N={n_contents}")
        targets = [k for k in range(n_contents) if k != self.source_content] if self.targets is None else list(self.targets)
        if len(set(targets)) != len(targets):
            raise ValueError("duplicate target content ids")
        for k in [self.source_content, *targets]:
            if not 0 <= k < n_contents:
                raise ValueError(f"content id {k} out of range [0, {n_contents})")
        return targets


@dataclass(frozen=True)
class StyleDomainLabel:
    style_id: int
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"style weight must be in [0, 1], got {self.weight}")


def _require_paired(bundle: ModelBundle) -> None:
    if not bundle.paired:
        raise ConfigMismatchError("this operation needs a paired (typeface/content) bundle")


@torch.no_grad()
def translate(bundle: ModelBundle, x: Tensor, y_in: Tensor, y_tgt: Tensor) -> Tensor:
    """Batched G(E(x), y_in, y_tgt) in evaluation mode."""
    was_training = bundle.generator.training
    bundle.eval()
    out = bundle.generator(bundle.features(x), y_in, y_tgt)
    bundle.train(was_training)
    return out


@torch.no_grad()
def complete_typeface(req: CompletionRequest, bundle: ModelBundle) -> list[tuple[int, GlyphImage]]:
    """Encode the source once and generate one glyph per target content."""
    _require_paired(bundle)
    targets = req.resolve_targets(bundle.config.n_contents)
    if not targets:
        return []
    was_training = bundle.generator.training
    bundle.eval()
    x = req.source.to_tensor()[None]
    feats = bundle.features(x)
    n = len(targets)
    feats = tuple(h.expand(n, -1) for h in feats)
    y_in = torch.full((n,), req.source_content, dtype=torch.long)
    out = bundle.generator(feats, y_in, torch.tensor(targets))
    bundle.train(was_training)
    return [(k, GlyphImage.from_tensor(img, req.source.typeface_id, k)) for k, img in zip(targets, out)]


def reconstruct(x: GlyphImage, y: int, bundle: ModelBundle) -> GlyphImage:
    return complete_typeface(CompletionRequest(x, y, targets=[y]), bundle)[0][1]


def completion_pairs(bundle: ModelBundle, data: GlyphSet, max_sources: int | None = None) -> dict[str, Tensor]:
    """Every (source, target) pair within each typeface of `data`, generated in batches.

    With `max_sources`, only the first that many contents of each typeface act as sources.
    """
    _require_paired(bundle)
    index = data.index()
    src_idx, tgt_idx = [], []
    for t in sorted(set(data.typeface_ids.tolist())):
        contents = sorted(c for (tt, c) in index if tt == t)
        sources = contents if max_sources is None else contents[:max_sources]
        for i in sources:
            for k in contents:
                if k != i:
                    src_idx.append(index[(t, i)])
                    tgt_idx.append(index[(t, k)])
    src = torch.tensor(src_idx, dtype=torch.long)
    tgt = torch.tensor(tgt_idx, dtype=torch.long)
    generated = []
    for b in range(0, len(src), 64):
        s, k = src[b : b + 64], tgt[b : b + 64]
        generated.append(translate(bundle, data.images[s], data.content_ids[s], data.content_ids[k]))
    return {
        "generated": torch.cat(generated),
        "sources": data.images[src],
        "targets": data.images[tgt],
        "source_typefaces": data.typeface_ids[src],
        "target_contents": data.content_ids[tgt],
    }


def reconstruction_outputs(bundle: ModelBundle, data: GlyphSet) -> dict[str, Tensor]:
    gen = [translate(bundle, data.images[b : b + 64], data.content_ids[b : b + 64], data.content_ids[b : b + 64]) for b in range(0, len(data), 64)]
    return {
        "generated": torch.cat(gen),
        "targets": data.images,
        "source_typefaces": data.typeface_ids,
        "target_contents": data.content_ids,
    }


def evaluate_bundle(
    bundle: ModelBundle,
    data: GlyphSet,
    classifiers: EvalClassifiers | None = None,
    params: SsimParams = DEFAULT_SSIM,
    max_sources: int | None = None,
    copy_baseline: bool = False,
) -> dict[str, dict[str, float]]:
    """Completion and reconstruction scores on `data` (normally the test split)."""
    comp = completion_pairs(bundle, data, max_sources)
    rec = reconstruction_outputs(bundle, data)
    report = {
        "completion": score_outputs(comp["generated"], comp["targets"], comp["source_typefaces"], comp["target_contents"], classifiers, params),
        "reconstruction": score_outputs(rec["generated"], rec["targets"], rec["source_typefaces"], rec["target_contents"], classifiers, params),
    }
    if copy_baseline:
        report["copy_input"] = score_outputs(comp["sources"], comp["targets"], comp["source_typefaces"], comp["target_contents"], classifiers, params)
    return report


def weighted_style_embedding(e_src: Tensor, e_tgt: Tensor, w: float) -> Tensor:
    """(1 - w) * e_src + w * e_tgt, for w in [0, 1]."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"weight must be in [0, 1], got {w}")
    if w == 0.0:
        return e_src.clone()
    if w == 1.0:
        return e_tgt.clone()
    return (1.0 - w) * e_src + w * e_tgt


@torch.no_grad()
def style_transfer(x: Tensor, src_style: StyleDomainLabel, tgt_style: StyleDomainLabel, bundle: ModelBundle) -> Tensor:
    """Swap the style label of an unpaired-mode image.

    The target embedding is interpolated from the source style towards the target
    style by `tgt_style.weight` (1.0 = plain transfer).
    """
    if bundle.paired:
        raise ConfigMismatchError("style_transfer needs a bundle trained in unpaired mode")
    single = x.dim() == 3
    xb = x[None] if single else x
    g = bundle.generator
    was_training = g.training
    bundle.eval()
    n = xb.shape[0]
    e_src = g.label_vectors(torch.full((n,), src_style.style_id, dtype=torch.long))
    e_to = g.label_vectors(torch.full((n,), tgt_style.style_id, dtype=torch.long))
    e_tgt = weighted_style_embedding(e_src, e_to, tgt_style.weight)
    out = g.image(g.combine(bundle.features(xb), e_src, e_tgt))
    bundle.train(was_training)
    return out[0] if single else out


def contact_sheet(images: list[np.ndarray], ncols: int = 10, pad: int = 2) -> np.ndarray:
    """Images tiled row-major on a white grid."""
    if not images:
        raise ValueError("no images for the contact sheet")
    h, w = images[0].shape[:2]
    rows = (len(images) + ncols - 1) // ncols
    cols = min(ncols, len(images))
    shape = (rows * (h + pad) + pad, cols * (w + pad) + pad) + images[0].shape[2:]
    sheet = np.ones(shape, dtype=np.float32)
    for i, img in enumerate(images):
        r, c = divmod(i, ncols)
        y, x0 = pad + r * (h + pad), pad + c * (w + pad)
        sheet[y : y + h, x0 : x0 + w] = img
    return sheet


def write_completion(
    outputs: list[tuple[int, GlyphImage]],
    out_dir: str | Path,
    typeface_tag: str,
    source: GlyphImage | None = None,
) -> list[Path]:
    """One PNG per output named `<tag>_<content>.png`, plus `<tag>_sheet.png`."""
    out_dir = Path(out_dir)
    paths = []
    for k, img in outputs:
        p = out_dir / f"{typeface_tag}_{k}.png"
        img.save_png(p)
        paths.append(p)
    tiles = ([source.pixels] if source is not None else []) + [img.pixels for _, img in outputs]
    save_png(out_dir / f"{typeface_tag}_sheet.png", contact_sheet(tiles))
    return paths
