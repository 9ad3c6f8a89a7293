"""Encoder pretraining and adversarial main training."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import pickle
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import Tensor, nn
from torch.nn import functional as F

from . import losses as L
from .completion import completion_pairs
from .config import TrainConfig, save_config, to_dict
from .glyphdata import DatasetManifest, GlyphSet, LabelIndex, ManifestError, PairSampler, TripletSampler
from .metrics import EvalClassifiers, apply_jitter, jitter_params, score_outputs, train_eval_classifiers
from .networks import Decoder, ModelBundle, NetConfig, load_bundle, save_bundle

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, report: L.LossReport, step: int):
        self.report = report
        self.step = step
        super().__init__(f"non-finite loss at step {step}: {json.dumps(report.to_dict())}")


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def lr_at(step: int, total: int, base: float, decay_start: float = 0.5) -> float:
    """Constant, then linear to zero over the last (1 - decay_start) of `total` steps."""
    start = int(total * decay_start)
    if total <= 0 or step < start:
        return base
    return base * max(0.0, (total - step) / max(1, total - start))


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for g in opt.param_groups:
        g["lr"] = lr


def rng_digest(rng: np.random.Generator) -> str:
    state = pickle.dumps((rng.bit_generator.state, torch.get_rng_state().numpy().tobytes()))
    return hashlib.sha256(state).hexdigest()[:16]


@dataclass
class StepTrace:
    step: int
    phase: str
    report: dict[str, float]
    rng: str
    lr: float

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "phase": self.phase, "lr": self.lr, "rng": self.rng, **self.report}, sort_keys=True)


def trace_digest(traces: list[StepTrace]) -> str:
    return hashlib.sha256("\n".join(t.to_json() for t in traces).encode()).hexdigest()


class CurveLog:
    """Append-only JSON-lines training log."""

    def __init__(self, path: Path | None):
        self.path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, trace: StepTrace) -> None:
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(trace.to_json() + "\n")


# ---------------------------------------------------------------- pretraining


@dataclass
class PretrainResult:
    accuracy: dict[str, float]
    triplet_order: dict[str, float]
    traces: list[StepTrace]


def pretrain_holdout_contents(data: GlyphSet, n: int, seed: int) -> list[int]:
    """`n` content ids kept out of pretraining in every typeface."""
    contents = sorted(set(data.content_ids.tolist()))
    if n <= 0:
        return []
    if n > len(contents) - 2:
        raise ManifestError(f"cannot hold out {n} of {len(contents)} contents")
    rng = np.random.default_rng(seed)
    return sorted(int(c) for c in rng.choice(contents, size=n, replace=False))


def _triplet_jitter(x: Tensor, n: int, gen: torch.Generator, strength: float = 1.0) -> Tensor:
    """Anchor and same-typeface partner share one random distortion, the same-content partner gets another.

    This widens the range of typefaces the encoders see while keeping every triplet consistent.
    """
    theta, morph = jitter_params(n, gen, strength)
    theta_k, morph_k = jitter_params(n, gen, strength)
    return torch.cat([apply_jitter(x[:n], theta, morph), apply_jitter(x[n : 2 * n], theta, morph), apply_jitter(x[2 * n :], theta_k, morph_k)])


def _pretrain_terms(bundle: ModelBundle, decoder: Decoder, x: Tensor, t: Tensor, c: Tensor, n: int, cfg: TrainConfig) -> dict[str, Tensor]:
    """`x` stacks anchors, same-typeface and same-content partners, `n` each."""
    te, ce = bundle.typeface_encoder, bundle.content_encoder
    assert ce is not None
    out_t, out_c = te(x), ce(x)
    ht, hc = out_t.h, out_c.h
    a, j, k = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    return {
        "pretrain_cls_t": L.pretrain_classification_loss(out_t.logits, t),
        "pretrain_cls_c": L.pretrain_classification_loss(out_c.logits, c),
        "triplet_t": L.triplet_loss(ht[a], ht[j], ht[k], cfg.triplet_margin, cfg.triplet_hinge),
        "triplet_c": L.triplet_loss(hc[a], hc[k], hc[j], cfg.triplet_margin, cfg.triplet_hinge),
        "pretrain_rec": L.pretrain_reconstruction_loss(x[a], decoder(ht[a], hc[a])),
    }


def pretrain_encoders(
    bundle: ModelBundle,
    train_set: GlyphSet,
    cfg: TrainConfig,
    heldout_set: GlyphSet | None = None,
    log_path: Path | None = None,
) -> PretrainResult:
    """Train both encoders with classification, triplet and auto-encoder losses.

    `cfg.pretrain_holdout` contents are held out of every training typeface; typeface
    accuracy is measured on them, so shape cannot leak typeface identity. Content
    accuracy (on the remaining contents) and triplet ordering are measured on
    `heldout_set`, whose typefaces are never seen, when given.
    """
    if len(set(train_set.typeface_ids.tolist())) < 2 or len(set(train_set.content_ids.tolist())) < 2:
        raise ManifestError("pretraining needs at least 2 typefaces and 2 contents")
    rng = np.random.default_rng(cfg.seed)
    held_contents = pretrain_holdout_contents(train_set, cfg.pretrain_holdout, cfg.seed)
    hold = torch.isin(train_set.content_ids, torch.tensor(held_contents, dtype=torch.long))
    fit = train_set.subset(~hold)
    sampler = TripletSampler(LabelIndex(fit.typeface_ids.numpy(), fit.content_ids.numpy()))
    torch.manual_seed(cfg.seed + 101)
    decoder = Decoder(bundle.config)
    params = [p for e in bundle.encoders() for p in e.parameters()] + list(decoder.parameters())
    opt = torch.optim.Adam(params, lr=cfg.pretrain_lr, betas=(cfg.beta1, cfg.beta2))
    gen = torch.Generator().manual_seed(cfg.seed + 202)
    total = cfg.pretrain_epochs * cfg.pretrain_steps_per_epoch
    curve = CurveLog(log_path)
    traces = []
    bundle.train()
    for step in range(total):
        a, j, k = sampler.sample(rng, cfg.batch_size)
        idx = torch.from_numpy(np.concatenate([a, j, k]))
        x = fit.images[idx]
        if cfg.pretrain_augment:
            x = _triplet_jitter(x, cfg.batch_size, gen, cfg.pretrain_jitter)
        terms = _pretrain_terms(bundle, decoder, x, fit.typeface_ids[idx], fit.content_ids[idx], cfg.batch_size, cfg)
        loss = sum(terms.values())
        report = L.LossReport.from_terms(terms)
        if not report.all_finite():
            raise NonFiniteLossError(report, step)
        lr = lr_at(step, total, cfg.pretrain_lr, cfg.lr_decay_start)
        _set_lr(opt, lr)
        opt.zero_grad()
        loss.backward()
        opt.step()
        tr = StepTrace(step, "pretrain", report.to_dict(), rng_digest(rng), lr)
        traces.append(tr)
        if step % cfg.log_every == 0:
            curve.write(tr)
    bundle.eval()
    held_images = train_set.subset(hold)
    acc = measure_encoder_accuracy(bundle, held_images, heldout_set, held_contents)
    order = {}
    if heldout_set is not None and len(set(heldout_set.typeface_ids.tolist())) >= 2:
        order = triplet_ordering(bundle, heldout_set, np.random.default_rng(cfg.seed + 7), 500)
    log.info("pretraining done: accuracy %s triplet order %s", acc, order)
    return PretrainResult(acc, order, traces)


@torch.no_grad()
def measure_encoder_accuracy(
    bundle: ModelBundle,
    held_train: GlyphSet,
    unseen: GlyphSet | None,
    held_contents: list[int] = (),  # type: ignore[assignment]
) -> dict[str, float]:
    """Typeface accuracy on `held_train`; content accuracy on `unseen` minus `held_contents`.

    Without unseen typefaces, content accuracy falls back to `held_train`.
    """
    assert bundle.content_encoder is not None
    out = {}
    if len(held_train):
        pt = bundle.typeface_encoder(held_train.images).logits.argmax(1)
        out["typeface"] = float((pt == held_train.typeface_ids).float().mean())
    data = held_train
    if unseen is not None:
        data = unseen.subset(~torch.isin(unseen.content_ids, torch.tensor(list(held_contents), dtype=torch.long)))
    if len(data):
        pc = torch.cat([bundle.content_encoder(data.images[b : b + 64]).logits.argmax(1) for b in range(0, len(data), 64)])
        out["content"] = float((pc == data.content_ids).float().mean())
    return out


@torch.no_grad()
def triplet_ordering(bundle: ModelBundle, data: GlyphSet, rng: np.random.Generator, n: int = 500) -> dict[str, float]:
    """Fraction of sampled triplets where the positive is closer than the negative, per encoder."""
    assert bundle.content_encoder is not None
    sampler = TripletSampler(LabelIndex(data.typeface_ids.numpy(), data.content_ids.numpy()))
    ht = torch.cat([bundle.typeface_encoder.backbone(data.images[b : b + 64]) for b in range(0, len(data), 64)])
    hc = torch.cat([bundle.content_encoder.backbone(data.images[b : b + 64]) for b in range(0, len(data), 64)])
    a, j, k = (torch.from_numpy(v) for v in sampler.sample(rng, n))
    d = lambda h, u, v: (h[u] - h[v]).norm(dim=1)  # noqa: E731
    return {
        "typeface": float((d(ht, a, j) < d(ht, a, k)).float().mean()),
        "content": float((d(hc, a, k) < d(hc, a, j)).float().mean()),
    }


# ---------------------------------------------------------------- main training


@dataclass
class Batch:
    x_i: Tensor
    y_i: Tensor
    t_i: Tensor
    x_k: Tensor
    y_k: Tensor


@dataclass
class Optimizers:
    g: torch.optim.Optimizer
    d: torch.optim.Optimizer

    @classmethod
    def build(cls, bundle: ModelBundle, cfg: TrainConfig) -> "Optimizers":
        betas = (cfg.beta1, cfg.beta2)
        return cls(
            torch.optim.Adam(bundle.generator_parameters(), lr=cfg.lr, betas=betas),
            torch.optim.Adam(bundle.discriminator.parameters(), lr=cfg.lr, betas=betas),
        )

    def set_lr(self, lr: float) -> None:
        _set_lr(self.g, lr)
        _set_lr(self.d, lr)


def make_batch(data: GlyphSet, sampler: PairSampler, rng: np.random.Generator, n: int) -> Batch:
    a, k = (torch.from_numpy(v) for v in sampler.sample(rng, n))
    return Batch(data.images[a], data.content_ids[a], data.typeface_ids[a], data.images[k], data.content_ids[k])


def jitter_pair(batch: Batch, gen: torch.Generator, strength: float) -> Batch:
    """Both glyphs of a pair share one random distortion, so they still share a typeface."""
    theta, morph = jitter_params(len(batch.x_i), gen, strength)
    return Batch(apply_jitter(batch.x_i, theta, morph), batch.y_i, batch.t_i, apply_jitter(batch.x_k, theta, morph), batch.y_k)


def generator_terms(bundle: ModelBundle, batch: Batch, cfg: TrainConfig) -> tuple[dict[str, Tensor], Tensor]:
    """Loss terms of one generator pass and the (undetached) translated images."""
    g, d = bundle.generator, bundle.discriminator
    feats = bundle.features(batch.x_i)
    terms: dict[str, Tensor] = {}
    if not cfg.has("no_id"):
        terms["id"] = L.identity_loss(batch.x_i, g(feats, batch.y_i, batch.y_i))
    x_hat = g(feats, batch.y_i, batch.y_k)
    if not cfg.has("no_ssim"):
        terms["ssim"] = L.ssim_loss(batch.x_k, x_hat, cfg.ssim_params)
    out = d(x_hat)
    terms["gan_g"] = L.adversarial_generator_loss(out.tf_logit)
    ce_t, ce_c = L.auxiliary_classification_loss(out.t_logits, out.c_logits, batch.t_i, batch.y_k)
    terms["cls_g_t"], terms["cls_g_c"] = ce_t, ce_c
    terms["cls_g"] = ce_t + ce_c
    if not (cfg.has("no_rec") and cfg.has("no_per")):
        x_tilde = g(bundle.features(x_hat), batch.y_k, batch.y_i)
        if not cfg.has("no_rec"):
            terms["rec"] = L.cycle_reconstruction_loss(batch.x_i, x_tilde)
        if not cfg.has("no_per"):
            terms["per"] = perceptual_term(bundle, feats, x_tilde, cfg.perceptual_reduction)
    return terms, x_hat


@contextmanager
def frozen(*modules: nn.Module) -> Iterator[None]:
    """Parameters of `modules` act as constants for the ops recorded inside the block."""
    params = [p for m in modules for p in m.parameters()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad_(f)


def perceptual_term(bundle: ModelBundle, feats: tuple[Tensor, ...], x_tilde: Tensor, reduction: str = "mean") -> Tensor:
    """Feature distance with the encoders used as fixed feature extractors.

    Gradients reach the generator through `x_tilde` only; letting them into the
    encoders would let both sides shrink the features towards a constant.
    """
    with frozen(*bundle.encoders()):
        h_tilde = bundle.features(x_tilde)
    return L.perceptual_reconstruction_loss(tuple(h.detach() for h in feats), h_tilde, reduction)


def _total_terms(terms: dict[str, Tensor]) -> dict[str, Tensor]:
    """Terms entering the weighted total (cls via its split parts)."""
    return {k: v for k, v in terms.items() if k != "cls_g"}


def generator_step(bundle: ModelBundle, batch: Batch, cfg: TrainConfig, opt: torch.optim.Optimizer, step: int = 0) -> tuple[L.LossReport, Tensor]:
    """One update of encoders, embedding and generator; the discriminator is held fixed."""
    bundle.discriminator.requires_grad_(False)
    try:
        terms, x_hat = generator_terms(bundle, batch, cfg)
        total = L.generator_total(_total_terms(terms), cfg.weights)
        assert isinstance(total, Tensor)
        report = L.LossReport.from_terms({**terms, "total_g": total})
        if not report.all_finite():
            raise NonFiniteLossError(report, step)
        opt.zero_grad()
        total.backward()
        opt.step()
    finally:
        bundle.discriminator.requires_grad_(True)
    return report, x_hat.detach()


def discriminator_step(
    bundle: ModelBundle,
    batch: Batch,
    cfg: TrainConfig,
    opt: torch.optim.Optimizer,
    fake: Tensor | None = None,
    step: int = 0,
) -> L.LossReport:
    """One discriminator update on the real anchors and detached translations."""
    if fake is None:
        with torch.no_grad():
            fake = bundle.generator(bundle.features(batch.x_i), batch.y_i, batch.y_k)
    d = bundle.discriminator
    t_real = batch.t_i if bundle.paired else None
    terms = L.discriminator_terms(d(batch.x_i), d(fake.detach()), t_real, batch.y_i)
    total = L.discriminator_total(terms)
    assert isinstance(total, Tensor)
    report = L.LossReport.from_terms({**terms, "total_d": total})
    if not report.all_finite():
        raise NonFiniteLossError(report, step)
    opt.zero_grad()
    total.backward()
    opt.step()
    return report


@dataclass
class TrainState:
    bundle: ModelBundle
    opts: Optimizers
    rng: np.random.Generator
    jitter: torch.Generator
    step: int = 0
    best_ssim: float = -math.inf
    best_step: int = -1
    history: list[dict] = field(default_factory=list)


def _save_state(path: Path, state: TrainState, cfg: TrainConfig) -> None:
    save_bundle(
        path,
        state.bundle,
        extra={
            "train_config": to_dict(cfg),
            "step": state.step,
            "best_ssim": state.best_ssim,
            "best_step": state.best_step,
            "history": state.history,
            "opt_g": state.opts.g.state_dict(),
            "opt_d": state.opts.d.state_dict(),
            "np_rng": state.rng.bit_generator.state,
            "torch_rng": torch.get_rng_state(),
            "jitter_rng": state.jitter.get_state(),
        },
    )


def _load_state(path: Path, cfg: TrainConfig) -> TrainState:
    bundle, extra = load_bundle(path)
    opts = Optimizers.build(bundle, cfg)
    opts.g.load_state_dict(extra["opt_g"])
    opts.d.load_state_dict(extra["opt_d"])
    rng = np.random.default_rng()
    rng.bit_generator.state = extra["np_rng"]
    torch.set_rng_state(extra["torch_rng"])
    jitter = torch.Generator()
    jitter.set_state(extra["jitter_rng"])
    return TrainState(bundle, opts, rng, jitter, extra["step"], extra["best_ssim"], extra["best_step"], list(extra["history"]))


@torch.no_grad()
def validation_ssim(bundle: ModelBundle, data: GlyphSet, cfg: TrainConfig) -> float:
    comp = completion_pairs(bundle, data)
    return score_outputs(comp["generated"], comp["targets"], comp["source_typefaces"], comp["target_contents"], params=cfg.ssim_params)["ssim"]


@dataclass
class TrainResult:
    bundle: ModelBundle  # best validation checkpoint
    final_bundle: ModelBundle
    traces: list[StepTrace]
    history: list[dict]
    out_dir: Path | None
    pretrain: PretrainResult | None = None


def train_main(
    bundle: ModelBundle,
    train_set: GlyphSet,
    val_set: GlyphSet | None,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    max_steps: int | None = None,
) -> TrainResult:
    """Alternate generator and discriminator steps 1:1 with per-epoch validation and checkpoints.

    `max_steps` stops early (the schedule still assumes the full run), which is how
    resume is tested.
    """
    out = Path(out_dir) if out_dir is not None else None
    curve = CurveLog(out / "curves.jsonl" if out else None)
    if resume_from is not None:
        state = _load_state(Path(resume_from), cfg)
    else:
        jitter = torch.Generator().manual_seed(cfg.seed + 303)
        state = TrainState(bundle, Optimizers.build(bundle, cfg), np.random.default_rng(cfg.seed + 1), jitter)
    sampler = PairSampler(LabelIndex(train_set.typeface_ids.numpy(), train_set.content_ids.numpy()))
    total = cfg.total_steps
    stop = total if max_steps is None else min(total, max_steps)
    traces: list[StepTrace] = []
    best_state = None
    state.bundle.train()
    while state.step < stop:
        step = state.step
        lr = lr_at(step, total, cfg.lr, cfg.lr_decay_start)
        state.opts.set_lr(lr)
        batch = make_batch(train_set, sampler, state.rng, cfg.batch_size)
        if cfg.main_jitter > 0:
            batch = jitter_pair(batch, state.jitter, cfg.main_jitter)
        rep_g, fake = generator_step(state.bundle, batch, cfg, state.opts.g, step)
        rep_d = discriminator_step(state.bundle, batch, cfg, state.opts.d, fake, step)
        tr = StepTrace(step, "main", {**rep_g.to_dict(), **rep_d.to_dict()}, rng_digest(state.rng), lr)
        traces.append(tr)
        if step % cfg.log_every == 0:
            curve.write(tr)
        state.step += 1
        if cfg.steps_per_epoch and state.step % cfg.steps_per_epoch == 0 or state.step == total:
            entry = {"step": state.step, "epoch": state.step // max(1, cfg.steps_per_epoch)}
            if val_set is not None:
                v = validation_ssim(state.bundle, val_set, cfg)
                entry["val_ssim"] = v
                if v > state.best_ssim:
                    state.best_ssim, state.best_step = v, state.step
                    best_state = {k: {n: t.clone() for n, t in sd.items()} for k, sd in state.bundle.state_dict().items()}
                    if out:
                        save_bundle(out / "best.pt", state.bundle, extra={"train_config": to_dict(cfg), "step": state.step, "val_ssim": v})
                state.bundle.train()
            state.history.append(entry)
            log.info("epoch %s %s", entry["epoch"], entry)
            if out:
                _save_state(out / "last.pt", state, cfg)
    final = state.bundle
    final.eval()
    if best_state is not None:
        best = ModelBundle.build(final.config)
        best.load_state_dict(best_state)
        best.classifiers = final.classifiers
        best.eval()
    elif out and (out / "best.pt").exists():
        best, _ = load_bundle(out / "best.pt")
    else:
        best = final
    return TrainResult(best, final, traces, state.history, out)


def pretrained_bundle(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> tuple[ModelBundle, PretrainResult]:
    """Fresh bundle for `manifest` with pretrained encoders (saved as pretrained.pt)."""
    set_determinism(cfg.seed)
    net = cfg.net_config(manifest.n_contents, manifest.n_typefaces)
    bundle = ModelBundle.build(net, seed=cfg.seed)
    train_set = manifest.load_split("train")
    held = _optional_split(manifest, "validation", "test")
    out = Path(out_dir) if out_dir is not None else None
    result = pretrain_encoders(bundle, train_set, cfg, held, out / "pretrain_curves.jsonl" if out else None)
    if out:
        save_bundle(out / "pretrained.pt", bundle, extra={"accuracy": result.accuracy, "triplet_order": result.triplet_order})
    return bundle, result


def _optional_split(manifest: DatasetManifest, *splits: str) -> GlyphSet | None:
    try:
        return manifest.load_split(*splits)
    except ManifestError:
        return None


def train(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    pretrained: str | Path | ModelBundle | None = None,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Full protocol: pretrain encoders (unless given), then main training."""
    set_determinism(cfg.seed)
    out = Path(out_dir) if out_dir is not None else None
    if out:
        save_config(out / "resolved_config.json", cfg)
    pre: PretrainResult | None = None
    if resume_from is not None:
        bundle = None
    elif isinstance(pretrained, ModelBundle):
        bundle = _fresh_copy_with_encoders(pretrained, cfg)
    elif pretrained is not None:
        loaded, _ = load_bundle(pretrained)
        bundle = _fresh_copy_with_encoders(loaded, cfg)
    else:
        bundle, pre = pretrained_bundle(manifest, cfg, out)
    train_set = manifest.load_split("train")
    val_set = _optional_split(manifest, "validation")
    result = train_main(bundle, train_set, val_set, cfg, out, resume_from)  # type: ignore[arg-type]
    result.pretrain = pre
    return result


def _fresh_copy_with_encoders(src: ModelBundle, cfg: TrainConfig) -> ModelBundle:
    """New bundle (config from `cfg`) that takes over the pretrained encoder weights."""
    net = cfg.net_config(src.config.n_contents, src.config.n_typefaces)
    bundle = ModelBundle.build(net, seed=cfg.seed)
    bundle.typeface_encoder.load_state_dict(src.typeface_encoder.state_dict())
    if src.content_encoder is not None and bundle.content_encoder is not None:
        bundle.content_encoder.load_state_dict(src.content_encoder.state_dict())
    return bundle


def fit_eval_classifiers(manifest: DatasetManifest, net: NetConfig, cfg: TrainConfig, split: str = "test") -> EvalClassifiers:
    """Evaluation classifiers on one split, with every fourth image held out for accuracy."""
    data = manifest.load_split(split)
    hold = torch.zeros(len(data), dtype=torch.bool)
    hold[torch.arange(len(data)) % 4 == 3] = True
    return train_eval_classifiers(data.images, data.typeface_ids, data.content_ids, net, hold, cfg.classifier_steps, cfg.seed)


# ---------------------------------------------------------------- unpaired mode


def unpaired_generator_terms(
    bundle: ModelBundle, x: Tensor, s_src: Tensor, s_tgt: Tensor, reduction: str = "mean"
) -> tuple[dict[str, Tensor], Tensor]:
    """Adversarial, style classification, cycle and perceptual terms (no target image exists)."""
    g, d = bundle.generator, bundle.discriminator
    feats = bundle.features(x)
    x_hat = g(feats, s_src, s_tgt)
    out = d(x_hat)
    x_tilde = g(bundle.features(x_hat), s_tgt, s_src)
    terms = {
        "gan_g": L.adversarial_generator_loss(out.tf_logit),
        "cls_g": F.cross_entropy(out.c_logits, s_tgt),
        "rec": L.cycle_reconstruction_loss(x, x_tilde),
        "per": perceptual_term(bundle, feats, x_tilde, reduction),
    }
    return terms, x_hat


def train_unpaired(
    images: Tensor,
    styles: Tensor,
    n_styles: int,
    cfg: TrainConfig,
    steps: int,
    out_dir: str | Path | None = None,
) -> tuple[ModelBundle, list[StepTrace]]:
    """Style-label translation without content labels or targets (single encoder)."""
    set_determinism(cfg.seed)
    images = images.contiguous()  # strided inputs crash the CPU conv backward
    net = cfg.net_config(0, 0, mode="unpaired", n_styles=n_styles, image_channels=images.shape[1])
    bundle = ModelBundle.build(net, seed=cfg.seed)
    opts = Optimizers.build(bundle, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    traces = []
    out = Path(out_dir) if out_dir is not None else None
    curve = CurveLog(out / "curves.jsonl" if out else None)
    bundle.train()
    for step in range(steps):
        lr = lr_at(step, steps, cfg.lr, cfg.lr_decay_start)
        opts.set_lr(lr)
        idx = torch.from_numpy(rng.integers(len(images), size=cfg.batch_size))
        x, s = images[idx], styles[idx]
        shift = torch.from_numpy(rng.integers(1, n_styles, size=cfg.batch_size)) if n_styles > 1 else torch.zeros_like(s)
        s_tgt = (s + shift) % n_styles
        bundle.discriminator.requires_grad_(False)
        terms, x_hat = unpaired_generator_terms(bundle, x, s, s_tgt, cfg.perceptual_reduction)
        total = L.generator_total(terms, cfg.weights)
        assert isinstance(total, Tensor)
        rep_g = L.LossReport.from_terms({**terms, "total_g": total})
        if not rep_g.all_finite():
            raise NonFiniteLossError(rep_g, step)
        opts.g.zero_grad()
        total.backward()
        opts.g.step()
        bundle.discriminator.requires_grad_(True)
        rep_d = discriminator_step(bundle, Batch(x, s, s, x, s_tgt), cfg, opts.d, x_hat.detach(), step)
        tr = StepTrace(step, "unpaired", {**rep_g.to_dict(), **rep_d.to_dict()}, rng_digest(rng), lr)
        traces.append(tr)
        curve.write(tr)
    bundle.eval()
    if out:
        save_bundle(out / "unpaired.pt", bundle, extra={"train_config": to_dict(cfg), "step": steps})
    return bundle, traces


__all__ = [
    "Batch",
    "CurveLog",
    "NonFiniteLossError",
    "Optimizers",
    "PretrainResult",
    "StepTrace",
    "TrainResult",
    "discriminator_step",
    "fit_eval_classifiers",
    "generator_step",
    "frozen",
    "generator_terms",
    "perceptual_term",
    "lr_at",
    "make_batch",
    "measure_encoder_accuracy",
    "pretrain_encoders",
    "pretrain_holdout_contents",
    "pretrained_bundle",
    "set_determinism",
    "trace_digest",
    "train",
    "train_main",
    "train_unpaired",
    "triplet_ordering",
    "unpaired_generator_terms",
    "validation_ssim",
]
