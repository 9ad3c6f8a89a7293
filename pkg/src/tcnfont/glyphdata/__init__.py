from .manifest import (
    IMAGE_SIZE,
    SPLITS,
    DatasetManifest,
    GlyphImage,
    GlyphSet,
    ManifestEntry,
    ManifestError,
    load_png,
    save_png,
    split_typefaces,
)
from .render import PRESETS, DatasetPreset, MissingGlyphError, build_manifest, read_charset, render_glyph
from .sampling import LabelIndex, PairSampler, TripletBatch, TripletSampler, sample_triplet
from .toy import (
    STYLE_COLORS,
    ToyTypeface,
    content_skeleton,
    make_toy_dataset,
    make_toy_unpaired,
    rasterize,
    render_toy_glyph,
)

__all__ = [
    "IMAGE_SIZE",
    "PRESETS",
    "SPLITS",
    "STYLE_COLORS",
    "DatasetManifest",
    "DatasetPreset",
    "GlyphImage",
    "GlyphSet",
    "LabelIndex",
    "ManifestEntry",
    "ManifestError",
    "MissingGlyphError",
    "PairSampler",
    "ToyTypeface",
    "TripletBatch",
    "TripletSampler",
    "build_manifest",
    "content_skeleton",
    "load_png",
    "make_toy_dataset",
    "make_toy_unpaired",
    "rasterize",
    "read_charset",
    "render_glyph",
    "render_toy_glyph",
    "sample_triplet",
    "save_png",
    "split_typefaces",
]
