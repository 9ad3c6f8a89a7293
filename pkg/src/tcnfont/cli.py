"""Command-line entry point: dataset preparation, training, completion, evaluation, ablations."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from .completion import CompletionRequest, complete_typeface, evaluate_bundle, write_completion
from .config import ABLATIONS, ConfigError, TrainConfig, load_config, save_config
from .glyphdata import PRESETS, DatasetManifest, GlyphImage, ManifestError, build_manifest, load_png, make_toy_dataset, read_charset
from .metrics import format_table, write_report
from .networks import ConfigMismatchError, ModelBundle, load_bundle
from .training import NonFiniteLossError, fit_eval_classifiers, pretrained_bundle, train

log = logging.getLogger("tcnfont")

# exit code and category printed on failure, by exception type (first match wins)
ERROR_CATEGORIES: list[tuple[type[BaseException], str, int]] = [
    (ConfigError, "config", 2),
    (FileNotFoundError, "missing_file", 3),
    (ConfigMismatchError, "mismatch", 4),
    (ManifestError, "data", 5),
    (NonFiniteLossError, "non_finite", 6),
    (ValueError, "invalid_argument", 7),
]

ABLATION_GRID: list[tuple[str, ...]] = [
    (),
    ("no_ssim",),
    ("no_id",),
    ("no_ssim", "no_id"),
    ("no_rec",),
    ("no_per",),
    ("no_rec", "no_per"),
    ("no_input_label",),
]
REDUCED_GRID: list[tuple[str, ...]] = [(), ("no_ssim",), ("no_rec", "no_per")]


def variant_name(flags: Sequence[str]) -> str:
    return "+".join(flags) if flags else "full"


def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training config (any TrainConfig field)")
    g.add_argument("--config", help="flat YAML/JSON file of TrainConfig fields")
    g.add_argument("--flags", help="comma-separated ablation flags: " + ",".join(ABLATIONS))
    for f in fields(TrainConfig):
        if f.name == "ablation":
            continue
        g.add_argument(f"--{f.name}", dest=f"cfg_{f.name}", metavar="V", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcnfont", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", help="render a procedural toy dataset")
    p.add_argument("--typefaces", type=int, default=6)
    p.add_argument("--contents", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", required=True)

    p = sub.add_parser("render-dataset", help="rasterize a directory of fonts")
    p.add_argument("--font-dir", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="english")
    p.add_argument("--charset", help="charset file, one character per line (overrides the preset's)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", required=True)

    p = sub.add_parser("pretrain", help="pretrain both encoders")
    p.add_argument("--data", required=True, help="dataset directory with manifest.csv")
    p.add_argument("--output-dir", required=True)
    _config_flags(p)

    p = sub.add_parser("train", help="pretrain (unless --checkpoint) and train the full model")
    p.add_argument("--data", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--checkpoint", help="pretrained encoders (pretrained.pt)")
    p.add_argument("--resume", help="resume from a last.pt checkpoint")
    _config_flags(p)

    p = sub.add_parser("complete", help="generate the other characters of one glyph's typeface")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="source glyph PNG")
    p.add_argument("--content-id", type=int, required=True)
    p.add_argument("--targets", help="comma-separated target content ids (default: all others)")
    p.add_argument("--tag", default="glyph")
    p.add_argument("--output-dir", required=True)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--max-sources", type=int, default=None)
    p.add_argument("--output-dir", required=True)
    _config_flags(p)

    p = sub.add_parser("ablate", help="train and evaluate ablation variants")
    p.add_argument("--data", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--grid", choices=("full", "reduced"), help="run a whole grid instead of --flags alone")
    p.add_argument("--seeds", default=None, help="comma-separated seeds for --grid (default: --seed)")
    p.add_argument("--checkpoint", help="pretrained encoders to share across variants")
    _config_flags(p)
    return parser


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    overrides: dict[str, Any] = {}
    for f in fields(TrainConfig):
        v = getattr(args, f"cfg_{f.name}", None)
        if v is not None:
            overrides[f.name] = v
    if getattr(args, "flags", None) is not None:
        overrides["ablation"] = args.flags
    return load_config(getattr(args, "config", None), overrides)


def _load_manifest(path: str) -> DatasetManifest:
    if not (Path(path) / "manifest.csv").exists():
        raise FileNotFoundError(f"no manifest.csv in {path}")
    return DatasetManifest.load(path)


def _snapshot(out: Path, args: argparse.Namespace, cfg: TrainConfig | None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if cfg is not None:
        save_config(out / "resolved_config.json", cfg)
    run = {k: v for k, v in vars(args).items() if not k.startswith("cfg_")}
    (out / "run.json").write_text(json.dumps(run, indent=2, sort_keys=True, default=str) + "\n")


def cmd_make_toy(args: argparse.Namespace) -> dict:
    m = make_toy_dataset(args.typefaces, args.contents, args.seed, args.output_dir)
    return {"images": len(m.entries), "splits": {s: m.typefaces(s) for s in ("train", "validation", "test")}}


def cmd_render_dataset(args: argparse.Namespace) -> dict:
    preset = PRESETS[args.preset]
    if args.charset:
        charset = read_charset(args.charset)
    elif preset.charset is not None:
        charset = list(preset.charset)
    else:
        raise ConfigError(f"preset {preset.name!r} needs --charset")
    m = build_manifest(args.font_dir, charset, preset.split_spec, args.seed, args.output_dir)
    return {"images": len(m.entries), "typefaces": m.n_typefaces, "contents": m.n_contents}


def cmd_pretrain(args: argparse.Namespace, cfg: TrainConfig) -> dict:
    _, result = pretrained_bundle(_load_manifest(args.data), cfg, args.output_dir)
    return {"accuracy": result.accuracy, "triplet_order": result.triplet_order}


def cmd_train(args: argparse.Namespace, cfg: TrainConfig) -> dict:
    m = _load_manifest(args.data)
    res = train(m, cfg, args.output_dir, pretrained=args.checkpoint, resume_from=args.resume)
    out = {"history": res.history}
    if res.pretrain is not None:
        out["pretrain"] = {"accuracy": res.pretrain.accuracy, "triplet_order": res.pretrain.triplet_order}
    return out


def cmd_complete(args: argparse.Namespace) -> dict:
    bundle, _ = load_bundle(args.checkpoint)
    pixels = load_png(args.input, bundle.config.image_channels)
    source = GlyphImage(pixels, 0, args.content_id)
    targets = [int(t) for t in args.targets.split(",")] if args.targets else None
    req = CompletionRequest(source, args.content_id, targets)
    outputs = complete_typeface(req, bundle)
    paths = write_completion(outputs, args.output_dir, args.tag, source)
    return {"written": len(paths)}


def evaluation_report(bundle: ModelBundle, m: DatasetManifest, cfg: TrainConfig, split: str, max_sources: int | None) -> dict:
    data = m.load_split(split)
    clf = fit_eval_classifiers(m, bundle.config, cfg, split) if cfg.classifier_steps > 0 else None
    report = evaluate_bundle(bundle, data, clf, cfg.ssim_params, max_sources, copy_baseline=True)
    if clf is not None:
        report["classifier_accuracy"] = clf.accuracy
    return report


def cmd_evaluate(args: argparse.Namespace, cfg: TrainConfig) -> dict:
    m = _load_manifest(args.data)
    bundle, _ = load_bundle(args.checkpoint)
    if (bundle.config.n_contents, bundle.config.n_typefaces) != (m.n_contents, m.n_typefaces):
        raise ConfigMismatchError(
            f"checkpoint is N={bundle.config.n_contents}, T={bundle.config.n_typefaces}; data is N={m.n_contents}, T={m.n_typefaces}"
        )
    report = evaluation_report(bundle, m, cfg, args.split, args.max_sources)
    out = Path(args.output_dir)
    write_report(out / "report.json", report)
    (out / "table.txt").write_text(format_table({"model": report, "copy_input": {"completion": report["copy_input"]}}))
    return {"completion": report["completion"], "reconstruction": report["reconstruction"]}


def ablation_grid(
    manifest: DatasetManifest,
    base: TrainConfig,
    flag_sets: Sequence[Sequence[str]],
    out_dir: str | Path,
    seeds: Sequence[int] = (0,),
    pretrained: dict[int, ModelBundle] | None = None,
    max_sources: int | None = None,
) -> dict[str, dict[int, float]]:
    """Train one model per (flag set, seed) and collect test completion SSIM.

    Pretrained encoders are shared by all variants of a seed (pretraining does not
    depend on the flags). Returns {variant: {seed: ssim}} and writes grid.json / grid.txt.
    """
    out = Path(out_dir)
    results: dict[str, dict[int, float]] = {variant_name(f): {} for f in flag_sets}
    pretrained = dict(pretrained or {})
    test = manifest.load_split("test")
    for seed in seeds:
        seed_cfg = base.with_overrides(seed=seed)
        if seed not in pretrained:
            pretrained[seed], _ = pretrained_bundle(manifest, seed_cfg, out / f"seed{seed}")
        for flags in flag_sets:
            name = variant_name(flags)
            cfg = seed_cfg.with_overrides(ablation=list(flags))
            run_dir = out / f"seed{seed}" / name
            res = train(manifest, cfg, run_dir, pretrained=pretrained[seed])
            rep = evaluate_bundle(res.bundle, test, None, cfg.ssim_params, max_sources)
            write_report(run_dir / "report.json", rep)
            results[name][seed] = rep["completion"]["ssim"]
            log.info("seed %d %s completion ssim %.4f", seed, name, results[name][seed])
    write_report(out / "grid.json", {k: {str(s): v for s, v in d.items()} for k, d in results.items()})
    (out / "grid.txt").write_text(format_grid(results))
    return results


def format_grid(results: dict[str, dict[int, float]]) -> str:
    seeds = sorted({s for d in results.values() for s in d})
    rows = [["variant"] + [f"seed {s}" for s in seeds] + ["mean"]]
    for name, d in results.items():
        vals = [d[s] for s in seeds if s in d]
        rows.append([name] + [f"{d[s]:.4f}" if s in d else "-" for s in seeds] + [f"{sum(vals) / len(vals):.4f}" if vals else "-"])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def cmd_ablate(args: argparse.Namespace, cfg: TrainConfig) -> dict:
    m = _load_manifest(args.data)
    pretrained = {}
    if args.checkpoint:
        pretrained[cfg.seed], _ = load_bundle(args.checkpoint)
    if args.grid is None:
        # a single variant, the flags coming from --flags
        results = ablation_grid(m, cfg, [cfg.ablation], args.output_dir, (cfg.seed,), pretrained)
        return {"completion_ssim": results, "checkpoint": str(Path(args.output_dir) / f"seed{cfg.seed}" / variant_name(cfg.ablation) / "best.pt")}
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    grid = ABLATION_GRID if args.grid == "full" else REDUCED_GRID
    results = ablation_grid(m, cfg.with_overrides(ablation=[]), grid, args.output_dir, seeds, pretrained)
    return {"completion_ssim": results}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args) if hasattr(args, "config") else None
        _snapshot(Path(args.output_dir), args, cfg)
        handlers = {
            "make-toy": lambda: cmd_make_toy(args),
            "render-dataset": lambda: cmd_render_dataset(args),
            "pretrain": lambda: cmd_pretrain(args, cfg),
            "train": lambda: cmd_train(args, cfg),
            "complete": lambda: cmd_complete(args),
            "evaluate": lambda: cmd_evaluate(args, cfg),
            "ablate": lambda: cmd_ablate(args, cfg),
        }
        summary = handlers[args.command]()
    except Exception as exc:  # noqa: BLE001 - every failure gets a category line
        for kind, category, code in ERROR_CATEGORIES:
            if isinstance(exc, kind):
                print(f"error[{category}]: {exc}", file=sys.stderr)
                return code
        raise
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
