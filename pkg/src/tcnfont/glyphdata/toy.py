"""Procedural toy typefaces.

A content is a stroke skeleton (a list of polylines in a unit box, y up); a
typeface is a set of pen parameters applied to every skeleton. Pixel ink is

    ink(p) = max over segments s of clip(r_s - d_s(p) + 0.5, 0, 1)

where d_s is the pen-metric distance from the pixel centre to segment s and r_s
the half stroke width of s. The rendered value is 1 - ink.
"""

from __future__ import annotations

import logging
import math
from dataclasses import astuple, dataclass
from pathlib import Path

import numpy as np
import torch

from .manifest import IMAGE_SIZE, DatasetManifest, GlyphImage, ManifestEntry, save_png, split_typefaces

log = logging.getLogger(__name__)

Polyline = list[tuple[float, float]]

TOY_SPLIT = {"train": 3, "validation": 1, "test": 2}


def _circle(r: float, n: int = 24, cx: float = 0.0, cy: float = 0.0, a0: float = 0.0, a1: float = 2 * math.pi) -> Polyline:
    return [(cx + r * math.cos(a0 + (a1 - a0) * i / n), cy + r * math.sin(a0 + (a1 - a0) * i / n)) for i in range(n + 1)]


def _base_shapes() -> list[tuple[str, list[Polyline]]]:
    s = 0.75
    wave = [(-s + 2 * s * i / 16, 0.35 * math.sin(2 * math.pi * i / 16 * 1.5)) for i in range(17)]
    return [
        ("bar", [[(-s, 0.0), (s, 0.0)]]),
        ("pole", [[(0.0, -s), (0.0, s)]]),
        ("plus", [[(-s, 0.0), (s, 0.0)], [(0.0, -s), (0.0, s)]]),
        ("cross", [[(-s, -s), (s, s)], [(-s, s), (s, -s)]]),
        ("ring", [_circle(s)]),
        ("square", [[(-s, -s), (s, -s), (s, s), (-s, s), (-s, -s)]]),
        ("triangle", [[(-s, -s), (s, -s), (0.0, s), (-s, -s)]]),
        ("diamond", [[(0.0, -s), (s, 0.0), (0.0, s), (-s, 0.0), (0.0, -s)]]),
        ("ell", [[(-0.5, s), (-0.5, -s), (s, -s)]]),
        ("tee", [[(-s, s), (s, s)], [(0.0, s), (0.0, -s)]]),
        ("aitch", [[(-0.6, -s), (-0.6, s)], [(0.6, -s), (0.6, s)], [(-0.6, 0.0), (0.6, 0.0)]]),
        ("zed", [[(-s, s), (s, s), (-s, -s), (s, -s)]]),
        ("cup", [[(-0.6, s), (-0.6, 0.0)] + _circle(0.6, 12, 0.0, 0.0, math.pi, 2 * math.pi)[1:] + [(0.6, s)]]),
        ("comb", [[(s, s), (-0.6, s), (-0.6, -s), (s, -s)], [(-0.6, 0.0), (0.5, 0.0)]]),
        ("arrow", [[(-s, 0.0), (s, 0.0)], [(0.2, 0.5), (s, 0.0), (0.2, -0.5)]]),
        ("wave", [wave]),
        ("vee", [[(-s, s), (0.0, -s), (s, s)]]),
        ("equals", [[(-s, 0.35), (s, 0.35)], [(-s, -0.35), (s, -0.35)]]),
        ("hash", [[(-s, 0.3), (s, 0.3)], [(-s, -0.3), (s, -0.3)], [(-0.3, -s), (-0.3, s)], [(0.3, -s), (0.3, s)]]),
        ("arch", [[(-0.6, -s), (-0.6, 0.1)] + _circle(0.6, 12, 0.0, 0.1, math.pi, 0.0)[1:] + [(0.6, -s)]]),
    ]


BASE_SHAPES = _base_shapes()
_MARKERS = [None, (-0.6, 0.6), (0.6, 0.6), (-0.6, -0.6), (0.6, -0.6)]


def content_skeleton(content_id: int) -> tuple[str, list[Polyline]]:
    """Skeleton of content `content_id`; ids beyond the base shapes add a corner tick."""
    n_base = len(BASE_SHAPES)
    if content_id < 0 or content_id >= n_base * len(_MARKERS):
        raise ValueError(f"toy content id {content_id} out of range [0, {n_base * len(_MARKERS)})")
    name, strokes = BASE_SHAPES[content_id % n_base]
    marker = _MARKERS[content_id // n_base]
    if marker is None:
        return name, strokes
    mx, my = marker
    tick = [(mx - 0.12, my), (mx + 0.12, my)]
    return f"{name}+{content_id // n_base}", strokes + [tick]


MAX_TOY_CONTENTS = len(BASE_SHAPES) * len(_MARKERS)


@dataclass(frozen=True)
class ToyTypeface:
    stroke_width: float  # px
    slant: float  # horizontal shear per unit height
    x_scale: float
    y_scale: float
    roundness: float  # 1 = round pen (L2), 0 = square pen (L-inf)
    contrast: float  # thinning of horizontal strokes

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "ToyTypeface":
        return cls(
            stroke_width=float(rng.uniform(5.0, 14.0)),
            slant=float(rng.uniform(-0.35, 0.35)),
            x_scale=float(rng.uniform(0.65, 1.0)),
            y_scale=float(rng.uniform(0.7, 1.0)),
            roundness=float(rng.uniform(0.0, 1.0)),
            contrast=float(rng.uniform(0.0, 0.6)),
        )

    def normalized(self) -> np.ndarray:
        lo = np.array([5.0, -0.35, 0.65, 0.7, 0.0, 0.0])
        hi = np.array([14.0, 0.35, 1.0, 1.0, 1.0, 0.6])
        return (np.array(astuple(self)) - lo) / (hi - lo)

    def to_pixels(self, x: float, y: float) -> tuple[float, float]:
        half = (IMAGE_SIZE - 16) / 2
        c = IMAGE_SIZE / 2
        return c + half * self.x_scale * (x + self.slant * y) / (1 + abs(self.slant)), c - half * self.y_scale * y


def _segments(tf: ToyTypeface, strokes: list[Polyline]) -> np.ndarray:
    segs = []
    for line in strokes:
        pts = [tf.to_pixels(x, y) for x, y in line]
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            segs.append((x0, y0, x1, y1))
    return np.asarray(segs, dtype=np.float64)


def _half_widths(tf: ToyTypeface, segs: np.ndarray) -> np.ndarray:
    dx, dy = segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1]
    cos2 = dx**2 / np.maximum(dx**2 + dy**2, 1e-12)
    return 0.5 * tf.stroke_width * (1.0 - tf.contrast * cos2)


def rasterize(tf: ToyTypeface, strokes: list[Polyline]) -> np.ndarray:
    """Render a skeleton with typeface `tf`; float32 (128, 128), ink = 0."""
    segs = _segments(tf, strokes)
    radii = _half_widths(tf, segs)
    coords = np.arange(IMAGE_SIZE, dtype=np.float64) + 0.5
    px, py = np.meshgrid(coords, coords)  # px: column (x), py: row (y)
    ink = np.zeros((IMAGE_SIZE, IMAGE_SIZE))
    for (x0, y0, x1, y1), r in zip(segs, radii):
        vx, vy = x1 - x0, y1 - y0
        ll = vx * vx + vy * vy
        t = np.clip(((px - x0) * vx + (py - y0) * vy) / ll, 0.0, 1.0) if ll > 0 else np.zeros_like(px)
        ox, oy = px - (x0 + t * vx), py - (y0 + t * vy)
        d = tf.roundness * np.hypot(ox, oy) + (1 - tf.roundness) * np.maximum(np.abs(ox), np.abs(oy))
        np.maximum(ink, np.clip(r - d + 0.5, 0.0, 1.0), out=ink)
    return (1.0 - ink).astype(np.float32)


def render_toy_glyph(tf: ToyTypeface, content_id: int, typeface_id: int = 0) -> GlyphImage:
    return GlyphImage(rasterize(tf, content_skeleton(content_id)[1]), typeface_id, content_id)


def sample_typefaces(n: int, rng: np.random.Generator, min_distance: float = 0.3, max_tries: int = 10_000) -> list[ToyTypeface]:
    """Draw `n` pen settings that are pairwise at least `min_distance` apart (normalized L2)."""
    chosen: list[ToyTypeface] = []
    tries = 0
    while len(chosen) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {n} toy typefaces at distance {min_distance}")
        cand = ToyTypeface.sample(rng)
        if all(np.linalg.norm(cand.normalized() - c.normalized()) >= min_distance for c in chosen):
            chosen.append(cand)
    return chosen


def _distinct(images: dict[int, np.ndarray], new: np.ndarray, min_frac: float) -> bool:
    q_new = np.round(new * 255)
    return all((np.round(img * 255) != q_new).mean() >= min_frac for img in images.values())


def make_toy_dataset(
    n_typefaces: int,
    n_contents: int,
    seed: int,
    out_dir: str | Path,
    split_spec=None,
    min_pixel_diff: float = 0.01,
) -> DatasetManifest:
    """Render `n_typefaces` x `n_contents` procedural glyphs to PNG and write a manifest."""
    if n_typefaces < 3 or n_contents < 3:
        raise ValueError("toy dataset needs at least 3 typefaces and 3 contents")
    if n_contents > MAX_TOY_CONTENTS:
        raise ValueError(f"at most {MAX_TOY_CONTENTS} toy contents are defined")
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    typefaces = sample_typefaces(n_typefaces, rng)
    # per-content images of previously accepted typefaces, for the collision check
    accepted: dict[int, dict[int, np.ndarray]] = {c: {} for c in range(n_contents)}
    for t in range(n_typefaces):
        for attempt in range(100):
            imgs = [rasterize(typefaces[t], content_skeleton(c)[1]) for c in range(n_contents)]
            if all(_distinct(accepted[c], imgs[c], min_pixel_diff) for c in range(n_contents)):
                break
            log.warning("toy typeface %d collides with an earlier one; perturbing", t)
            typefaces[t] = ToyTypeface.sample(rng)
        else:
            raise RuntimeError("could not generate pixel-distinct toy typefaces")
        for c, img in enumerate(imgs):
            accepted[c][t] = img
    if split_spec is None:
        split_spec = TOY_SPLIT if n_typefaces == 6 else (0.7, 0.1, 0.2)
    assignment = split_typefaces(n_typefaces, split_spec, seed)
    entries = []
    for t in range(n_typefaces):
        for c in range(n_contents):
            rel = f"images/{t:03d}/{c:04d}.png"
            save_png(out_dir / rel, accepted[c][t])
            entries.append(ManifestEntry(rel, t, c, assignment[t]))
    manifest = DatasetManifest(
        entries=entries,
        n_contents=n_contents,
        n_typefaces=n_typefaces,
        charset=[content_skeleton(c)[0] for c in range(n_contents)],
        split_assignment=assignment,
        root=out_dir,
        seed=seed,
        typeface_names=[f"toy{t:02d}" for t in range(n_typefaces)],
        source="toy",
    )
    manifest.save(out_dir)
    (out_dir / "typefaces.json").write_text(
        "[\n" + ",\n".join("  " + str(list(astuple(tf))) for tf in typefaces) + "\n]\n"
    )
    return manifest


# unpaired mode: recoloured shapes, the colour being the style domain
STYLE_COLORS = {"black": (0.08, 0.08, 0.08), "blond": (0.93, 0.78, 0.30), "brown": (0.50, 0.27, 0.10)}


def recolor(gray: np.ndarray, color: tuple[float, float, float]) -> np.ndarray:
    """Paint the ink of a glyph raster with `color` on white; (128, 128, 3)."""
    ink = 1.0 - gray[..., None]
    return (1.0 - ink + ink * np.asarray(color, dtype=np.float32)[None, None]).astype(np.float32)


def make_toy_unpaired(n_images: int, seed: int, n_contents: int = 10) -> tuple[torch.Tensor, torch.Tensor]:
    """Random shapes in random pens, each painted in one of the style colours.

    Returns images (M, 3, 128, 128) and style ids (M,); shapes and pens carry no labels.
    """
    rng = np.random.default_rng(seed)
    colors = list(STYLE_COLORS.values())
    images, styles = [], []
    for i in range(n_images):
        tf = ToyTypeface.sample(rng)
        c = int(rng.integers(n_contents))
        s = i % len(colors)
        images.append(recolor(rasterize(tf, content_skeleton(c)[1]), colors[s]).transpose(2, 0, 1))
        styles.append(s)
    return torch.from_numpy(np.ascontiguousarray(np.stack(images))), torch.tensor(styles)
