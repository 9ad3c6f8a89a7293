"""Triplet and pair sampling over labelled glyph sets."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .manifest import DatasetManifest, GlyphImage, ManifestError


@dataclass
class TripletBatch:
    anchor: GlyphImage
    same_typeface: GlyphImage
    same_content: GlyphImage

    def __post_init__(self) -> None:
        a, j, k = self.anchor, self.same_typeface, self.same_content
        if a.typeface_id != j.typeface_id or a.content_id == j.content_id:
            raise ValueError("same_typeface partner must share the typeface and differ in content")
        if a.content_id != k.content_id or a.typeface_id == k.typeface_id:
            raise ValueError("same_content partner must share the content and differ in typeface")


class LabelIndex:
    """Positions of items grouped by typeface and by content."""

    def __init__(self, typeface_ids, content_ids):
        self.typeface_ids = np.asarray(typeface_ids, dtype=np.int64)
        self.content_ids = np.asarray(content_ids, dtype=np.int64)
        by_t: dict[int, list[int]] = defaultdict(list)
        by_c: dict[int, list[int]] = defaultdict(list)
        for i, (t, c) in enumerate(zip(self.typeface_ids, self.content_ids)):
            by_t[int(t)].append(i)
            by_c[int(c)].append(i)
        self.by_typeface = {k: np.asarray(v) for k, v in by_t.items()}
        self.by_content = {k: np.asarray(v) for k, v in by_c.items()}

    def __len__(self) -> int:
        return len(self.typeface_ids)


class TripletSampler:
    """Anchors uniform over those with both partners; partners uniform among valid ones."""

    def __init__(self, index: LabelIndex):
        self.index = index
        if len(index.by_typeface) < 2 or len(index.by_content) < 2:
            raise ManifestError("triplets need at least 2 typefaces and 2 contents")
        self.anchors = np.asarray(
            [
                i
                for i in range(len(index))
                if len(index.by_typeface[int(index.typeface_ids[i])]) > 1 and len(index.by_content[int(index.content_ids[i])]) > 1
            ]
        )
        if len(self.anchors) == 0:
            raise ManifestError("no anchor has both a same-typeface and a same-content partner")

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Indices (anchor, same typeface/other content, same content/other typeface)."""
        idx = self.index
        a = rng.choice(self.anchors, size=n)
        j = np.empty(n, dtype=np.int64)
        k = np.empty(n, dtype=np.int64)
        for m, i in enumerate(a):
            same_t = idx.by_typeface[int(idx.typeface_ids[i])]
            same_t = same_t[same_t != i]
            same_c = idx.by_content[int(idx.content_ids[i])]
            same_c = same_c[same_c != i]
            j[m] = rng.choice(same_t)
            k[m] = rng.choice(same_c)
        return a, j, k


class PairSampler:
    """Anchor uniform; target uniform among same-typeface, different-content items."""

    def __init__(self, index: LabelIndex):
        self.index = index
        self.anchors = np.asarray([i for i in range(len(index)) if len(index.by_typeface[int(index.typeface_ids[i])]) > 1])
        if len(self.anchors) == 0:
            raise ManifestError("no typeface has two or more contents")

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.index
        a = rng.choice(self.anchors, size=n)
        k = np.empty(n, dtype=np.int64)
        for m, i in enumerate(a):
            same_t = idx.by_typeface[int(idx.typeface_ids[i])]
            k[m] = rng.choice(same_t[same_t != i])
        return a, k


def sample_triplet(manifest: DatasetManifest, split: str, rng: np.random.Generator) -> TripletBatch:
    entries = manifest.entries_for(split)
    sampler = TripletSampler(LabelIndex([e.typeface_id for e in entries], [e.content_id for e in entries]))
    a, j, k = (int(v[0]) for v in sampler.sample(rng, 1))
    return TripletBatch(manifest.image(entries[a]), manifest.image(entries[j]), manifest.image(entries[k]))
