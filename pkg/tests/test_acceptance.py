"""Acceptance criteria, one PASS/FAIL line each (printed again in the terminal summary).

The long fixtures (pretraining, the ~3k-step toy run and the reduced ablation grid)
are session-scoped so every criterion that needs them shares one run.
"""

import math
import time

import numpy as np
import pytest
import torch

from tcnfont import losses as L
from tcnfont.cli import REDUCED_GRID, ablation_grid, evaluation_report
from tcnfont.completion import CompletionRequest, complete_typeface, evaluate_bundle, weighted_style_embedding
from tcnfont.config import toy_config
from tcnfont.metrics import GLOBAL_SSIM, SsimParams, ssim, write_report
from tcnfont.networks import DiscriminatorOutput, ModelBundle, NetConfig, count_parameters, n_dependent_parameters_per_label
from tcnfont.training import fit_eval_classifiers, pretrained_bundle, train, trace_digest

import conftest
from oracles import bce_logit_direct, central_difference, cross_entropy_direct, ssim_global_direct, ssim_windowed_direct

MAIN_EPOCHS = 30  # x 100 steps
GRID_EPOCHS = 6
GRID_SEEDS = (0, 1, 2)


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {name} -- {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


# ---------------------------------------------------------------- shared runs


@pytest.fixture(scope="session")
def pretrained(toy_manifest, tmp_path_factory):
    t0 = time.time()
    bundle, result = pretrained_bundle(toy_manifest, toy_config(), tmp_path_factory.mktemp("pretrain"))
    return bundle, result, time.time() - t0


@pytest.fixture(scope="session")
def toy_run(toy_manifest, pretrained, tmp_path_factory):
    cfg = toy_config(main_epochs=MAIN_EPOCHS)
    t0 = time.time()
    res = train(toy_manifest, cfg, tmp_path_factory.mktemp("main"), pretrained=pretrained[0])
    elapsed = time.time() - t0 + pretrained[2]
    clf = fit_eval_classifiers(toy_manifest, res.bundle.config, cfg, "test")
    test = toy_manifest.load_split("test")
    rep = evaluate_bundle(res.bundle, test, clf, cfg.ssim_params, copy_baseline=True)
    untrained = ModelBundle.build(res.bundle.config, seed=cfg.seed)
    rep["untrained"] = evaluate_bundle(untrained, test, clf, cfg.ssim_params)["completion"]
    rep["classifier_accuracy"] = clf.accuracy
    train_set = toy_manifest.load_split("train")
    rep["seen_reconstruction"] = evaluate_bundle(res.bundle, train_set, None, cfg.ssim_params, max_sources=1)["reconstruction"]
    with torch.no_grad():
        fake = complete_typeface(CompletionRequest(toy_manifest.image(next(e for e in toy_manifest.entries if e.split == "test")), 0), res.bundle)
        d = res.bundle.discriminator.eval()
        rep["p_tf_real_test"] = float(d(test.images).p_tf.mean())
        rep["p_tf_fake_test"] = float(d(torch.stack([g.to_tensor() for _, g in fake])).p_tf.mean())
    return res, rep, elapsed


# ---------------------------------------------------------------- 1-3: numerics


def test_c1_ssim_matches_direct_formula():
    rng = np.random.default_rng(11)
    t0 = time.time()
    worst = 0.0
    for _ in range(100):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        ta, tb = torch.tensor(a), torch.tensor(b)
        p = SsimParams()
        worst = max(worst, abs(float(ssim(ta, tb, p)) - ssim_windowed_direct(a, b, p.c1, p.c2)))
        worst = max(worst, abs(float(ssim(ta, tb, GLOBAL_SSIM)) - ssim_global_direct(a, b, p.c1, p.c2)))
    dt = time.time() - t0
    ok = worst < 1e-6 and dt < 10
    report(1, "SSIM oracle equivalence", ok, f"max |diff| {worst:.2e} over 100 pairs x 2 modes, {dt:.1f}s")
    assert ok


def _fd_fraction(loss, x0):
    x = torch.tensor(x0, requires_grad=True)
    loss(x).backward()
    num = central_difference(lambda v: float(loss(torch.tensor(v))), x0, eps=1e-3)
    rel = np.abs(x.grad.numpy() - num) / np.maximum(np.maximum(np.abs(num), np.abs(x.grad.numpy())), 1e-12)
    return float((rel < 1e-3).mean())


def test_c2_gradients_match_finite_differences():
    rng = np.random.default_rng(12)
    t0 = time.time()
    fractions = {}
    for mode, params in (("windowed", SsimParams()), ("global", GLOBAL_SSIM)):
        tgt = torch.tensor(rng.random((2, 1, 8, 8)))
        fractions[f"ssim_loss/{mode}"] = _fd_fraction(lambda x: L.ssim_loss(tgt, x, params), rng.random((2, 1, 8, 8)))
    ref = (torch.tensor(rng.normal(size=(2, 8, 8)).reshape(2, 64)), torch.tensor(rng.normal(size=(2, 64))))
    other = torch.tensor(rng.normal(size=(2, 64)))
    for red in ("sum", "mean"):
        fractions[f"perceptual/{red}"] = _fd_fraction(
            lambda x: L.perceptual_reconstruction_loss(ref, (x.reshape(2, 64), other), red), rng.normal(size=(2, 8, 8))
        )
    dt = time.time() - t0
    ok = all(f >= 0.95 for f in fractions.values()) and dt < 60
    report(2, "gradient checks", ok, ", ".join(f"{k} {v:.3f}" for k, v in fractions.items()) + f" within 1e-3, {dt:.1f}s")
    assert ok


def test_c3_loss_bounds_and_totals():
    rng = np.random.default_rng(13)
    g = torch.Generator().manual_seed(13)
    mins = {k: math.inf for k in ("ce", "bce_g", "triplet", "l1", "ssim_loss", "perceptual", "d_loss")}
    worst_total = 0.0
    for _ in range(1000):
        logits = torch.randn(4, 5, generator=g, dtype=torch.float64) * 3
        labels = torch.randint(0, 5, (4,), generator=g)
        mins["ce"] = min(mins["ce"], float(L.pretrain_classification_loss(logits, labels)))
        z = torch.randn(4, generator=g, dtype=torch.float64) * 4
        mins["bce_g"] = min(mins["bce_g"], float(L.adversarial_generator_loss(z)))
        a, p, n = (torch.randn(4, 8, generator=g, dtype=torch.float64) for _ in range(3))
        mins["triplet"] = min(mins["triplet"], float(L.triplet_loss(a, p, n)))
        x, y = (torch.rand(2, 1, 12, 12, generator=g, dtype=torch.float64) for _ in range(2))
        if rng.random() < 0.1:
            y = x.clone()
        mins["l1"] = min(mins["l1"], float(L.identity_loss(x, y)))
        mins["ssim_loss"] = min(mins["ssim_loss"], float(L.ssim_loss(x, y, SsimParams(size=7))))
        mins["perceptual"] = min(mins["perceptual"], float(L.perceptual_reconstruction_loss((a, p), (n, a))))

        # weighted totals against a direct sum
        terms = {k: float(v) for k, v in zip(L.GENERATOR_TERMS, rng.normal(size=6))}
        terms["ssim"] = -abs(terms["ssim"])
        terms["cls_g_t"], terms["cls_g_c"] = abs(rng.normal()), abs(rng.normal())
        w = L.LossWeights(*(float(v) for v in rng.uniform(0, 10, size=3)))
        want = terms["gan_g"] + w.lambda_cls * (terms["cls_g_t"] + terms["cls_g_c"]) + w.lambda_ssim * terms["ssim"]
        want += w.lambda_rec * (terms["rec"] + terms["per"] + terms["id"])
        worst_total = max(worst_total, abs(L.generator_total(terms, w) - want))

        tr, tf = torch.randn(2, generator=g, dtype=torch.float64), torch.randn(2, generator=g, dtype=torch.float64)
        tl, cl = torch.randn(2, 3, generator=g, dtype=torch.float64), torch.randn(2, 4, generator=g, dtype=torch.float64)
        lt, lc = torch.randint(0, 3, (2,), generator=g), torch.randint(0, 4, (2,), generator=g)
        d = float(L.discriminator_loss(DiscriminatorOutput(tr, tl, cl), DiscriminatorOutput(tf, tl * 0, cl * 0), lt, lc))
        mins["d_loss"] = min(mins["d_loss"], d)
        want_d = np.mean([bce_logit_direct(float(v), 1) for v in tr]) + np.mean([bce_logit_direct(float(v), 0) for v in tf])
        want_d += np.mean([cross_entropy_direct(tl[i].tolist(), int(lt[i])) for i in range(2)])
        want_d += np.mean([cross_entropy_direct(cl[i].tolist(), int(lc[i])) for i in range(2)])
        worst_total = max(worst_total, abs(d - want_d))
    bounds = {k: (-1.0 if k == "ssim_loss" else 0.0) for k in mins}
    ok = all(mins[k] >= bounds[k] - 1e-12 for k in mins) and worst_total < 1e-6
    detail = ", ".join(f"{k}>={mins[k]:.3g}" for k in mins) + f"; totals max |diff| {worst_total:.1e}"
    report(3, "loss bounds and totals", ok, detail)
    assert ok


# ---------------------------------------------------------------- 4-6: training


def test_c4_encoder_pretraining(pretrained):
    _, res, elapsed = pretrained
    acc, order = res.accuracy, res.triplet_order
    ok = acc["typeface"] > 0.8 and acc["content"] > 0.8 and min(order.values()) >= 0.8 and elapsed <= 600
    detail = (
        f"held-out acc typeface {acc['typeface']:.3f} content {acc['content']:.3f}; "
        f"triplet order typeface {order['typeface']:.3f} content {order['content']:.3f}; {elapsed / 60:.1f} min"
    )
    report(4, "encoder pretraining", ok, detail)
    assert ok


def test_c5_end_to_end_toy_training(toy_run):
    res, rep, elapsed = toy_run
    comp, rec = rep["completion"]["ssim"], rep["reconstruction"]["ssim"]
    base, copy = rep["untrained"]["ssim"], rep["copy_input"]["ssim"]
    content_acc = rep["completion"]["content_acc"]
    ok = rec > 0.8 and comp >= base + 0.05 and comp >= copy + 0.05 and content_acc > 0.8 and elapsed <= 45 * 60
    detail = (
        f"{len(res.traces)} steps, held-out reconstruction {rec:.3f}, completion {comp:.3f} "
        f"(untrained {base:.3f}, copy-input {copy:.3f}), content acc {content_acc:.3f} "
        f"(classifier on real {rep['classifier_accuracy']['content']:.3f}), {elapsed / 60:.1f} min; "
        f"for reference: training-typeface reconstruction {rep['seen_reconstruction']['ssim']:.3f}, "
        f"best validation {max(h.get('val_ssim', -1) for h in res.history):.3f}, "
        f"held-out p_tf real {rep['p_tf_real_test']:.3f} / fake {rep['p_tf_fake_test']:.3f}"
    )
    report(5, "end-to-end toy training", ok, detail)
    assert ok


def test_c6_ablation_direction(toy_manifest, pretrained, tmp_path_factory):
    base = toy_config(main_epochs=GRID_EPOCHS)
    t0 = time.time()
    results = ablation_grid(toy_manifest, base, REDUCED_GRID, tmp_path_factory.mktemp("grid"), GRID_SEEDS, {0: pretrained[0]})
    elapsed = time.time() - t0 + pretrained[2]
    wins = sum(results["full"][s] > results["no_ssim"][s] for s in GRID_SEEDS)
    ok = wins >= 2 and elapsed <= 90 * 60
    cells = "; ".join(f"{v}: " + "/".join(f"{results[v][s]:.3f}" for s in GRID_SEEDS) for v in results)
    report(6, "ablation direction", ok, f"full > no_ssim in {wins}/3 seeds ({cells}), {elapsed / 60:.1f} min")
    assert ok


# ---------------------------------------------------------------- 7-9: contracts


def test_c7_parameter_scaling():
    t0 = time.time()
    small, large = NetConfig(10, 150), NetConfig(1000, 150)
    cs, cl = count_parameters(ModelBundle.build(small)), count_parameters(ModelBundle.build(large))
    # per label: one embedding row, one discriminator content row, one encoder content-head row
    per_label = small.embed_dim + 2 * (small.latent_dim + 1)
    scaling = {"generator.embedding", "discriminator.c_head", "content_encoder.head", "total"}
    same = all(cs[k] == cl[k] for k in cs if k not in scaling)
    diff = cl["total"] - cs["total"]
    ok = same and diff == 990 * per_label == 990 * n_dependent_parameters_per_label(small) and time.time() - t0 < 10
    report(7, "parameter scaling", ok, f"total {cs['total']} vs {cl['total']}, diff {diff} = 990 x {per_label}; other blocks identical: {same}")
    assert ok


def test_c8_determinism(toy_manifest, tmp_path_factory):
    cfg = toy_config(pretrain_epochs=1, pretrain_steps_per_epoch=20, main_epochs=1, steps_per_epoch=100, classifier_steps=50)
    digests, reports = [], []
    for i in range(2):
        out = tmp_path_factory.mktemp(f"det{i}")
        res = train(toy_manifest, cfg, out)
        digests.append((trace_digest(res.pretrain.traces), trace_digest(res.traces)))
        write_report(out / "report.json", evaluation_report(res.bundle, toy_manifest, cfg, "test", 3))
        reports.append((out / "report.json").read_bytes())
    ok = digests[0] == digests[1] and reports[0] == reports[1]
    report(8, "determinism", ok, f"100-step trace digest {digests[0][1][:12]} vs {digests[1][1][:12]}; reports byte-identical: {reports[0] == reports[1]}")
    assert ok


def test_c9_inference_contract(toy_run, toy_manifest):
    bundle = toy_run[0].bundle
    test = toy_manifest.load_split("test")
    n = bundle.config.n_contents
    counts_ok = True
    for e in [e for e in toy_manifest.entries if e.split == "test"][:5]:
        src = toy_manifest.image(e)
        out = complete_typeface(CompletionRequest(src, e.content_id), bundle)
        valid = all(img.pixels.shape == (128, 128) and np.isfinite(img.pixels).all() and 0 <= img.pixels.min() <= img.pixels.max() <= 1 for _, img in out)
        counts_ok &= len(out) == n - 1 and valid and sorted(k for k, _ in out) == [k for k in range(n) if k != e.content_id]
    a, b = torch.randn(4, 256), torch.randn(4, 256)
    ident = (
        torch.equal(weighted_style_embedding(a, b, 0.0), a)
        and torch.equal(weighted_style_embedding(a, b, 1.0), b)
        and torch.equal(weighted_style_embedding(a, b, 0.5), 0.5 * a + 0.5 * b)
    )
    ok = counts_ok and ident and len(test) > 0
    report(9, "inference contract", ok, f"{n - 1} valid outputs per request: {counts_ok}; endpoint/midpoint identities exact: {ident}")
    assert ok
