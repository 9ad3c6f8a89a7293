"""Rasterize TTF/OTF glyphs and assemble font datasets."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont

from .manifest import IMAGE_SIZE, DatasetManifest, GlyphImage, ManifestEntry, ManifestError, save_png, split_typefaces

log = logging.getLogger(__name__)

INNER_BOX = 112
MIN_INK_COVERAGE = 0.005
RENDER_SIZE = 256
FONT_SUFFIXES = (".ttf", ".otf", ".ttc", ".otc")


class MissingGlyphError(LookupError):
    """The font has no usable glyph for the codepoint."""


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    n_contents: int | None
    split_spec: Mapping[str, int] | Sequence[float]
    charset: tuple[str, ...] | None = None


PRESETS = {
    # validation/test counts per the reference datasets; train takes the rest
    "chinese": DatasetPreset("chinese", 1000, {"validation": 15, "test": 30}),
    "english": DatasetPreset(
        "english", 26, {"validation": 90, "test": 181}, tuple(chr(c) for c in range(ord("A"), ord("Z") + 1))
    ),
    "toy": DatasetPreset("toy", None, (0.7, 0.1, 0.2)),
}


@lru_cache(maxsize=64)
def _cmap(font_file: str) -> frozenset[int]:
    with TTFont(font_file, lazy=True, fontNumber=0) as f:
        cmap = f.getBestCmap() or {}
    return frozenset(cmap)


@lru_cache(maxsize=16)
def _font(font_file: str, size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(font_file, size=size)


def render_glyph(font_file: str | Path, codepoint: int, canvas: int = IMAGE_SIZE, typeface_id: int = 0, content_id: int = 0) -> GlyphImage:
    """Render one codepoint black-on-white, tight bbox scaled into a centred 112 px box."""
    font_file = str(font_file)
    if codepoint not in _cmap(font_file):
        raise MissingGlyphError(f"{Path(font_file).name} has no glyph for U+{codepoint:04X}")
    font = _font(font_file, RENDER_SIZE)
    big = Image.new("L", (RENDER_SIZE * 2, RENDER_SIZE * 2), 0)
    ImageDraw.Draw(big).text((RENDER_SIZE // 2, RENDER_SIZE // 2), chr(codepoint), fill=255, font=font)
    bbox = big.getbbox()
    if bbox is None:
        raise MissingGlyphError(f"U+{codepoint:04X} renders blank in {Path(font_file).name}")
    crop = big.crop(bbox)
    inner = round(canvas * INNER_BOX / IMAGE_SIZE)
    scale = inner / max(crop.size)
    w, h = max(1, round(crop.size[0] * scale)), max(1, round(crop.size[1] * scale))
    crop = crop.resize((w, h), Image.Resampling.LANCZOS)
    ink = Image.new("L", (canvas, canvas), 0)
    ink.paste(crop, ((canvas - w) // 2, (canvas - h) // 2))
    pixels = 1.0 - np.asarray(ink, dtype=np.float32) / 255.0
    if (1.0 - pixels).mean() < MIN_INK_COVERAGE:
        raise MissingGlyphError(f"U+{codepoint:04X} in {Path(font_file).name} is below the ink threshold")
    return GlyphImage(pixels, typeface_id, content_id)


def read_charset(path: str | Path) -> list[str]:
    """One character per line (UTF-8); `U+XXXX` lines are accepted too."""
    chars = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        s = line.strip()
        if not s:
            continue
        if s.upper().startswith("U+"):
            s = chr(int(s[2:], 16))
        chars.append(s[0])
    if len(set(chars)) != len(chars):
        raise ManifestError(f"charset {path} has duplicate entries")
    return chars


def _render_font(args: tuple[str, list[str]]) -> dict[int, np.ndarray]:
    font_file, charset = args
    out = {}
    for cid, ch in enumerate(charset):
        try:
            out[cid] = render_glyph(font_file, ord(ch)).pixels
        except MissingGlyphError as exc:
            log.info("skip: %s", exc)
    return out


def num_workers() -> int:
    return max(1, int(os.environ.get("TCN_NUM_WORKERS", "1")))


def build_manifest(
    font_dir: str | Path,
    charset: Sequence[str],
    split_spec: Mapping[str, int] | Sequence[float],
    seed: int,
    out_dir: str | Path,
    min_coverage: float = 0.5,
) -> DatasetManifest:
    """Render every font in `font_dir` over `charset` and write PNGs plus manifest."""
    font_dir, out_dir = Path(font_dir), Path(out_dir)
    if not charset:
        raise ManifestError("charset is empty")
    fonts = sorted(p for p in font_dir.iterdir() if p.suffix.lower() in FONT_SUFFIXES) if font_dir.is_dir() else []
    if not fonts:
        raise ManifestError(f"no font files in {font_dir}")
    jobs = [(str(f), list(charset)) for f in fonts]
    if num_workers() > 1:
        with ProcessPoolExecutor(num_workers()) as ex:
            rendered = list(ex.map(_render_font, jobs))
    else:
        rendered = [_render_font(j) for j in jobs]
    usable = []
    for f, glyphs in zip(fonts, rendered):
        cov = len(glyphs) / len(charset)
        if cov < min_coverage:
            log.warning("dropping %s: covers %.1f%% of the charset", f.name, 100 * cov)
            continue
        usable.append((f, glyphs))
    if not usable:
        raise ManifestError("no font covers enough of the charset")
    assignment = split_typefaces(len(usable), split_spec, seed)
    entries = []
    for tid, (f, glyphs) in enumerate(usable):
        for cid, pixels in sorted(glyphs.items()):
            rel = f"images/{tid:04d}/{cid:05d}.png"
            save_png(out_dir / rel, pixels)
            entries.append(ManifestEntry(rel, tid, cid, assignment[tid]))
    manifest = DatasetManifest(
        entries=entries,
        n_contents=len(charset),
        n_typefaces=len(usable),
        charset=list(charset),
        split_assignment=assignment,
        root=out_dir,
        seed=seed,
        typeface_names=[f.name for f, _ in usable],
        source="fonts",
    )
    manifest.save(out_dir)
    return manifest
