import json
from pathlib import Path

import pytest

from tcnfont.cli import ABLATION_GRID, REDUCED_GRID, format_grid, run, variant_name

TINY = [
    "--backbone_widths", "4,4,8,8,8,8",
    "--generator_widths", "8,8,4,4",
    "--batch_size", "4",
    "--pretrain_epochs", "1",
    "--pretrain_steps_per_epoch", "2",
    "--main_epochs", "1",
    "--steps_per_epoch", "2",
    "--classifier_steps", "2",
]  # fmt: skip


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_toy")
    assert run(["make-toy", "--typefaces", "6", "--contents", "10", "--seed", "1", "--output-dir", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def trained(toy_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_train")
    assert run(["train", "--data", str(toy_dir), "--output-dir", str(out), *TINY]) == 0
    return out


def test_make_toy_writes_60_images(toy_dir):
    assert len(list(Path(toy_dir).rglob("*.png"))) == 60
    assert (Path(toy_dir) / "manifest.csv").exists()


def test_train_snapshots_config(trained):
    cfg = json.loads((trained / "resolved_config.json").read_text())
    assert cfg["backbone_widths"] == [4, 4, 8, 8, 8, 8] and cfg["main_epochs"] == 1
    assert json.loads((trained / "run.json").read_text())["command"] == "train"
    assert (trained / "best.pt").exists() and (trained / "last.pt").exists()


def test_complete_writes_outputs(toy_dir, trained, tmp_path):
    src = next(Path(toy_dir).rglob("*.png"))
    code = run(["complete", "--checkpoint", str(trained / "best.pt"), "--input", str(src), "--content-id", "0", "--tag", "t", "--output-dir", str(tmp_path)])
    assert code == 0
    assert len(list(tmp_path.glob("t_[0-9]*.png"))) == 9 and (tmp_path / "t_sheet.png").exists()


def test_evaluate_is_byte_stable(toy_dir, trained, tmp_path):
    args = ["evaluate", "--checkpoint", str(trained / "best.pt"), "--data", str(toy_dir), "--max-sources", "2", *TINY]
    assert run([*args, "--output-dir", str(tmp_path / "a")]) == 0
    assert run([*args, "--output-dir", str(tmp_path / "b")]) == 0
    for name in ("report.json", "table.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    table = (tmp_path / "a" / "table.txt").read_text()
    assert "SSIM" in table and "copy_input" in table


def test_evaluate_rejects_other_dataset(trained, tmp_path, capsys):
    other = tmp_path / "other"
    assert run(["make-toy", "--typefaces", "4", "--contents", "5", "--output-dir", str(other)]) == 0
    code = run(["evaluate", "--checkpoint", str(trained / "best.pt"), "--data", str(other), "--output-dir", str(tmp_path / "e")])
    assert code == 4 and "error[mismatch]" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv,code,category",
    [
        (["train", "--data", "{toy}", "--lr", "-1"], 2, "config"),
        (["train", "--data", "{toy}", "--flags", "no_everything"], 2, "config"),
        (["train", "--data", "{missing}"], 3, "missing_file"),
        (["complete", "--checkpoint", "{missing}/x.pt", "--input", "x.png", "--content-id", "0"], 3, "missing_file"),
        (["make-toy", "--typefaces", "1"], 7, "invalid_argument"),
    ],
)
def test_error_categories(argv, code, category, toy_dir, tmp_path, capsys):
    argv = [a.format(toy=toy_dir, missing=tmp_path / "nope") for a in argv] + ["--output-dir", str(tmp_path / "o")]
    assert run(argv) == code
    assert f"error[{category}]" in capsys.readouterr().err


def test_bad_manifest_category(tmp_path, capsys):
    (tmp_path / "manifest.csv").write_text("garbage\n")
    assert run(["pretrain", "--data", str(tmp_path), "--output-dir", str(tmp_path / "o")]) == 5
    assert "error[data]" in capsys.readouterr().err


def test_grid_definitions():
    assert len(ABLATION_GRID) == 8 and len(set(ABLATION_GRID)) == 8
    assert variant_name(()) == "full" and variant_name(("no_rec", "no_per")) == "no_rec+no_per"
    assert set(REDUCED_GRID) <= set(ABLATION_GRID)
    table = format_grid({variant_name(f): {0: 0.5, 1: 0.7} for f in ABLATION_GRID})
    lines = table.strip().splitlines()
    assert len(lines) == 9 and lines[1].split() == ["full", "0.5000", "0.7000", "0.6000"]


def test_ablate_single_variant(toy_dir, tmp_path):
    assert run(["ablate", "--data", str(toy_dir), "--output-dir", str(tmp_path), "--flags", "no_ssim", *TINY]) == 0
    grid = json.loads((tmp_path / "grid.json").read_text())
    assert list(grid) == ["no_ssim"]
    assert (tmp_path / "seed0" / "no_ssim" / "report.json").exists()
