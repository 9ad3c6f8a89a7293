"""Glyph images, dataset manifests and typeface-level splits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from PIL import Image

IMAGE_SIZE = 128
SPLITS = ("train", "validation", "test")
INK, BACKGROUND = 0.0, 1.0


class ManifestError(ValueError):
    pass


@dataclass
class GlyphImage:
    """One glyph raster, ink = 0.0 on a 1.0 background.

    `pixels` is (128, 128) for glyphs; unpaired colour images use (128, 128, 3).
    """

    pixels: np.ndarray
    typeface_id: int
    content_id: int

    def __post_init__(self) -> None:
        p = np.asarray(self.pixels, dtype=np.float32)
        if p.shape[:2] != (IMAGE_SIZE, IMAGE_SIZE) or p.ndim not in (2, 3) or (p.ndim == 3 and p.shape[2] != 3):
            raise ValueError(f"glyph image must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {p.shape}")
        if not np.isfinite(p).all() or p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        if self.typeface_id < 0 or self.content_id < 0:
            raise ValueError("ids must be non-negative")
        self.pixels = p

    def check_ids(self, n_typefaces: int, n_contents: int) -> None:
        if self.typeface_id >= n_typefaces or self.content_id >= n_contents:
            raise ValueError(f"ids ({self.typeface_id}, {self.content_id}) out of range ({n_typefaces}, {n_contents})")

    def to_tensor(self) -> torch.Tensor:
        p = torch.from_numpy(self.pixels)
        return p[None] if p.dim() == 2 else p.permute(2, 0, 1)

    @classmethod
    def from_tensor(cls, t: torch.Tensor, typeface_id: int, content_id: int) -> "GlyphImage":
        t = t.detach().float().cpu()
        arr = t[0].numpy() if t.shape[0] == 1 else t.permute(1, 2, 0).numpy()
        return cls(np.clip(arr, 0.0, 1.0), typeface_id, content_id)

    def save_png(self, path: str | Path) -> None:
        save_png(path, self.pixels)


def save_png(path: str | Path, pixels: np.ndarray) -> None:
    """8-bit PNG, grayscale for 2-D input, RGB for (H, W, 3)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.round(np.clip(pixels, 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(arr, mode="L" if arr.ndim == 2 else "RGB").save(path)


def load_png(path: str | Path, channels: int = 1) -> np.ndarray:
    img = Image.open(path).convert("L" if channels == 1 else "RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.shape[:2] != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"{path}: image must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {arr.shape[:2]}")
    return arr


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the manifest directory
    typeface_id: int
    content_id: int
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    n_contents: int
    n_typefaces: int
    charset: list[str]
    split_assignment: dict[int, str]
    root: Path = field(default=Path("."), compare=False)
    seed: int = 0
    typeface_names: list[str] = field(default_factory=list)
    source: str = "fonts"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if len(self.charset) != self.n_contents:
            raise ManifestError(f"charset has {len(self.charset)} entries, N={self.n_contents}")
        if set(self.split_assignment) != set(range(self.n_typefaces)):
            raise ManifestError("split assignment must cover every typeface exactly once")
        if not set(self.split_assignment.values()) <= set(SPLITS):
            raise ManifestError(f"unknown split name in {set(self.split_assignment.values())}")
        seen = set()
        for e in self.entries:
            key = (e.typeface_id, e.content_id)
            if key in seen:
                raise ManifestError(f"duplicate (typeface, content) pair {key}")
            seen.add(key)
            if not (0 <= e.content_id < self.n_contents and 0 <= e.typeface_id < self.n_typefaces):
                raise ManifestError(f"entry {e} has ids out of range")
            if self.split_assignment[e.typeface_id] != e.split:
                raise ManifestError(f"entry {e} disagrees with the typeface split")

    def typefaces(self, split: str) -> list[int]:
        return sorted(t for t, s in self.split_assignment.items() if s == split)

    def entries_for(self, *splits: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split in splits]

    def image(self, entry: ManifestEntry) -> GlyphImage:
        return GlyphImage(load_png(self.root / entry.path), entry.typeface_id, entry.content_id)

    def load_split(self, *splits: str) -> "GlyphSet":
        entries = self.entries_for(*splits)
        if not entries:
            raise ManifestError(f"no images in split(s) {splits}")
        pixels = np.stack([load_png(self.root / e.path) for e in entries])
        return GlyphSet(
            images=torch.from_numpy(pixels)[:, None],
            typeface_ids=torch.tensor([e.typeface_id for e in entries]),
            content_ids=torch.tensor([e.content_id for e in entries]),
        )

    # persistence: manifest.csv (one row per image) + manifest.json (header)

    def save(self, directory: str | Path | None = None) -> Path:
        d = Path(directory) if directory is not None else self.root
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "manifest.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "typeface_id", "content_id", "split"])
            for e in self.entries:
                w.writerow([e.path, e.typeface_id, e.content_id, e.split])
        header = {
            "n_contents": self.n_contents,
            "n_typefaces": self.n_typefaces,
            "charset": self.charset,
            "seed": self.seed,
            "split_assignment": {str(k): v for k, v in sorted(self.split_assignment.items())},
            "typeface_names": self.typeface_names,
            "source": self.source,
        }
        (d / "manifest.json").write_text(json.dumps(header, indent=2, ensure_ascii=False) + "\n")
        return d

    @classmethod
    def load(cls, directory: str | Path) -> "DatasetManifest":
        d = Path(directory)
        if d.is_file():
            d = d.parent
        try:
            header = json.loads((d / "manifest.json").read_text())
            with open(d / "manifest.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
        except FileNotFoundError as exc:
            raise ManifestError(f"no manifest in {d}") from exc
        entries = [ManifestEntry(r["path"], int(r["typeface_id"]), int(r["content_id"]), r["split"]) for r in rows]
        return cls(
            entries=entries,
            n_contents=int(header["n_contents"]),
            n_typefaces=int(header["n_typefaces"]),
            charset=list(header["charset"]),
            split_assignment={int(k): v for k, v in header["split_assignment"].items()},
            root=d,
            seed=int(header.get("seed", 0)),
            typeface_names=list(header.get("typeface_names", [])),
            source=header.get("source", "fonts"),
        )


@dataclass
class GlyphSet:
    """In-memory images of one or more splits with their labels."""

    images: torch.Tensor  # (M, C, 128, 128)
    typeface_ids: torch.Tensor
    content_ids: torch.Tensor

    def __len__(self) -> int:
        return len(self.images)

    def index(self) -> dict[tuple[int, int], int]:
        return {(int(t), int(c)): i for i, (t, c) in enumerate(zip(self.typeface_ids, self.content_ids))}

    def subset(self, mask: torch.Tensor) -> "GlyphSet":
        return GlyphSet(self.images[mask], self.typeface_ids[mask], self.content_ids[mask])


def split_typefaces(
    n_typefaces: int,
    split_spec: Sequence[float] | Mapping[str, int],
    seed: int,
) -> dict[int, str]:
    """Assign whole typefaces to train/validation/test.

    `split_spec` is either three ratios, or a mapping of counts; a count mapping may
    omit "train", which then takes every remaining typeface.
    """
    if isinstance(split_spec, Mapping):
        counts = {s: int(split_spec.get(s, 0)) for s in SPLITS}
        if "train" not in split_spec:
            counts["train"] = n_typefaces - counts["validation"] - counts["test"]
        if sum(counts.values()) != n_typefaces or min(counts.values()) < 0:
            raise ManifestError(f"split counts {counts} do not partition {n_typefaces} typefaces")
    else:
        ratios = np.asarray(split_spec, dtype=float)
        if ratios.shape != (3,) or (ratios < 0).any() or ratios.sum() <= 0:
            raise ManifestError(f"bad split ratios {split_spec}")
        ratios = ratios / ratios.sum()
        raw = ratios * n_typefaces
        base = np.floor(raw).astype(int)
        # largest remainder, then make sure every non-zero ratio gets a typeface
        for i in np.argsort(-(raw - base), kind="stable")[: n_typefaces - base.sum()]:
            base[i] += 1
        for i in range(3):
            if ratios[i] > 0 and base[i] == 0 and n_typefaces >= 3:
                base[i] = 1
                base[int(np.argmax(base))] -= 1
        counts = dict(zip(SPLITS, base.tolist()))
    order = np.random.default_rng(seed).permutation(n_typefaces)
    assignment: dict[int, str] = {}
    start = 0
    for s in SPLITS:
        for t in order[start : start + counts[s]]:
            assignment[int(t)] = s
        start += counts[s]
    return dict(sorted(assignment.items()))
