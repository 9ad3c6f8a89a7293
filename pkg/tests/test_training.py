import math

import numpy as np
import pytest
import torch

from tcnfont import losses as L
from tcnfont.config import ABLATIONS
from tcnfont.glyphdata import LabelIndex, ManifestError, PairSampler, make_toy_unpaired
from tcnfont.networks import ModelBundle
from tcnfont.training import (
    NonFiniteLossError,
    Optimizers,
    _total_terms,
    discriminator_step,
    generator_step,
    generator_terms,
    jitter_pair,
    lr_at,
    make_batch,
    pretrain_encoders,
    pretrain_holdout_contents,
    train,
    train_main,
    train_unpaired,
    trace_digest,
)


def _setup(cfg, data):
    bundle = ModelBundle.build(cfg.net_config(10, 6), seed=cfg.seed)
    sampler = PairSampler(LabelIndex(data.typeface_ids.numpy(), data.content_ids.numpy()))
    batch = make_batch(data, sampler, np.random.default_rng(0), cfg.batch_size)
    return bundle, batch


def _snapshot(module):
    return [p.detach().clone() for p in module.parameters()]


def test_lr_schedule():
    assert lr_at(0, 100, 1e-3) == 1e-3 and lr_at(49, 100, 1e-3) == 1e-3
    assert lr_at(75, 100, 1e-3) == pytest.approx(0.5e-3)
    assert lr_at(99, 100, 1e-3) < 1e-4
    assert lr_at(99, 3000, 1e-4) == 1e-4
    assert lr_at(2999, 3000, 1e-4) < 1e-6
    lrs = [lr_at(s, 200, 1.0) for s in range(200)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_generator_step_leaves_discriminator_untouched(tiny_train_config, toy_train):
    bundle, batch = _setup(tiny_train_config, toy_train)
    opts = Optimizers.build(bundle, tiny_train_config)
    d_before = _snapshot(bundle.discriminator)
    g_before = _snapshot(bundle.generator)
    generator_step(bundle, batch, tiny_train_config, opts.g)
    assert all(torch.equal(a, b) for a, b in zip(d_before, bundle.discriminator.parameters()))
    assert not all(torch.equal(a, b) for a, b in zip(g_before, bundle.generator.parameters()))
    assert all(p.requires_grad for p in bundle.discriminator.parameters())


def test_discriminator_step_leaves_generator_untouched(tiny_train_config, toy_train):
    bundle, batch = _setup(tiny_train_config, toy_train)
    opts = Optimizers.build(bundle, tiny_train_config)
    frozen = [_snapshot(m) for m in (bundle.generator, bundle.typeface_encoder, bundle.content_encoder)]
    d_before = _snapshot(bundle.discriminator)
    discriminator_step(bundle, batch, tiny_train_config, opts.d)
    for snap, m in zip(frozen, (bundle.generator, bundle.typeface_encoder, bundle.content_encoder)):
        assert all(torch.equal(a, b) for a, b in zip(snap, m.parameters()))
    assert not all(torch.equal(a, b) for a, b in zip(d_before, bundle.discriminator.parameters()))


@pytest.mark.parametrize("flag", ABLATIONS)
def test_each_ablation_removes_its_term(tiny_train_config, toy_train, flag):
    cfg = tiny_train_config.with_overrides(ablation=[flag])
    bundle, batch = _setup(cfg, toy_train)
    with torch.no_grad():
        terms, _ = generator_terms(bundle, batch, cfg)
    gone = {"no_ssim": "ssim", "no_id": "id", "no_rec": "rec", "no_per": "per"}.get(flag)
    if gone:
        assert gone not in terms
    assert set(terms) >= {"gan_g", "cls_g_t", "cls_g_c"}
    w = cfg.weights
    manual = float(terms["gan_g"]) + w.lambda_cls * (float(terms["cls_g_t"]) + float(terms["cls_g_c"]))
    manual += w.lambda_ssim * float(terms.get("ssim", 0.0))
    manual += w.lambda_rec * sum(float(terms.get(k, 0.0)) for k in ("rec", "per", "id"))
    assert abs(float(L.generator_total(_total_terms(terms), w)) - manual) < 1e-5


def test_input_label_ablation_builds_null_label(tiny_train_config):
    cfg = tiny_train_config.with_overrides(ablation=["no_input_label"])
    assert not cfg.net_config(10, 6).use_input_label


def test_nan_guard(tiny_train_config, toy_train):
    bundle, batch = _setup(tiny_train_config, toy_train)
    opts = Optimizers.build(bundle, tiny_train_config)
    with torch.no_grad():
        bundle.generator.image.fc.bias.fill_(float("nan"))
    before = _snapshot(bundle.typeface_encoder)
    with pytest.raises(NonFiniteLossError) as err:
        generator_step(bundle, batch, tiny_train_config, opts.g, step=5)
    assert err.value.step == 5
    assert all(torch.equal(a, b) for a, b in zip(before, bundle.typeface_encoder.parameters()))


def test_pretrain_rejects_degenerate_data(tiny_train_config, toy_manifest):
    data = toy_manifest.load_split("validation")  # a single typeface
    bundle = ModelBundle.build(tiny_train_config.net_config(10, 6), seed=0)
    with pytest.raises(ManifestError):
        pretrain_encoders(bundle, data, tiny_train_config)


def test_holdout_contents_shared(toy_train):
    held = pretrain_holdout_contents(toy_train, 2, seed=0)
    assert len(held) == 2 and held == pretrain_holdout_contents(toy_train, 2, seed=0)


def test_pretrain_runs_and_reports(tiny_train_config, toy_manifest):
    bundle = ModelBundle.build(tiny_train_config.net_config(10, 6), seed=0)
    res = pretrain_encoders(bundle, toy_manifest.load_split("train"), tiny_train_config, toy_manifest.load_split("validation", "test"))
    assert len(res.traces) == 3
    assert set(res.accuracy) == {"typeface", "content"}
    assert all(0 <= v <= 1 for v in [*res.accuracy.values(), *res.triplet_order.values()])
    assert {"triplet_t", "triplet_c", "pretrain_cls_t", "pretrain_cls_c"} <= set(res.traces[0].report)


def test_seeded_runs_identical(tiny_train_config, toy_manifest):
    a = train(toy_manifest, tiny_train_config)
    b = train(toy_manifest, tiny_train_config)
    assert len(a.traces) == 6
    assert trace_digest(a.traces) == trace_digest(b.traces)
    assert trace_digest(a.pretrain.traces) == trace_digest(b.pretrain.traces)


def test_resume_matches_uninterrupted(tiny_train_config, toy_manifest, tmp_path):
    cfg = tiny_train_config.with_overrides(main_jitter=1.0)
    data = toy_manifest.load_split("train")
    val = toy_manifest.load_split("validation")

    def fresh():
        torch.manual_seed(0)
        return ModelBundle.build(cfg.net_config(10, 6), seed=0)

    full = train_main(fresh(), data, val, cfg)
    first = train_main(fresh(), data, val, cfg, out_dir=tmp_path, max_steps=3)
    rest = train_main(None, data, val, cfg, out_dir=tmp_path / "b", resume_from=tmp_path / "last.pt")
    assert len(first.traces) == 3 and len(rest.traces) == 3
    assert [t.to_json() for t in full.traces] == [t.to_json() for t in first.traces + rest.traces]
    assert full.history == rest.history


def test_pair_jitter_keeps_labels(tiny_train_config, toy_train):
    _, batch = _setup(tiny_train_config, toy_train)
    out = jitter_pair(batch, torch.Generator().manual_seed(0), 1.0)
    assert out.x_i.shape == batch.x_i.shape and not torch.equal(out.x_i, batch.x_i)
    assert torch.equal(out.y_i, batch.y_i) and torch.equal(out.t_i, batch.t_i) and torch.equal(out.y_k, batch.y_k)
    # identity jitter leaves the images alone
    theta = torch.tensor([[1.0, 0, 0], [0, 1.0, 0]]).expand(len(batch.x_i), 2, 3)
    from tcnfont.metrics import apply_jitter

    same = apply_jitter(batch.x_i, theta, torch.full((len(batch.x_i),), 0.5))
    assert torch.allclose(same, batch.x_i, atol=1e-5)


def test_training_writes_artifacts(tiny_train_config, toy_manifest, tmp_path):
    train(toy_manifest, tiny_train_config, tmp_path)
    for name in ("resolved_config.json", "pretrained.pt", "last.pt", "best.pt", "curves.jsonl", "pretrain_curves.jsonl"):
        assert (tmp_path / name).exists(), name
    assert len((tmp_path / "curves.jsonl").read_text().splitlines()) == 6


def test_unpaired_training_smoke(tiny_train_config):
    x, s = make_toy_unpaired(6, seed=0)
    bundle, traces = train_unpaired(x, s, 3, tiny_train_config, steps=2)
    assert not bundle.paired and len(traces) == 2
    assert all(math.isfinite(v) for t in traces for v in t.report.values())
    assert {"gan_g", "cls_g", "rec", "per", "d_tf_real"} <= set(traces[0].report)
