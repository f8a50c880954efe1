"""Per-pixel category scoring, bi-temporal change likelihood, and
overlapped tile-and-stitch processing for inputs larger than one encoder
window.

Scoring follows the open-vocabulary paradigm: cosine similarity between
the per-pixel embedding and each category's text embedding, optionally
sharpened into a per-pixel distribution with a temperature softmax. The
change likelihood for category c is the squared difference of the two
epochs' score maps, which is symmetric in temporal order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentModel
from .core import BBox, Raster, bilinear_resize, minmax_normalize, write_raster
from .encoders import EncoderBundle, TextEmbeddingSet, encode_spatial, sliding_window_encode


@dataclass(frozen=True)
class ClassScoreMap:
    scores: Raster  # (H, W, K)
    categories: tuple[str, ...]
    mode: str

    def __post_init__(self):
        if self.mode not in ("logit", "softmax"):
            raise ValueError(f"mode must be logit or softmax, got {self.mode!r}")
        if self.scores.channels != len(self.categories):
            raise ValueError("one score channel per category required")
        object.__setattr__(self, "categories", tuple(self.categories))


@dataclass(frozen=True)
class ChangeLikelihoodMap:
    likelihood: Raster  # (H, W, K), all values >= 0
    categories: tuple[str, ...]

    def __post_init__(self):
        if self.likelihood.values.min() < 0:
            raise ValueError("change likelihood must be non-negative")
        object.__setattr__(self, "categories", tuple(self.categories))

    def category_channel(self, name: str) -> Raster:
        return self.likelihood.channel(self.categories.index(name))


@dataclass(frozen=True)
class TilingPlan:
    tile: int
    overlap: float
    placements: tuple[BBox, ...]

    @classmethod
    def build(cls, height: int, width: int, tile: int, overlap: float) -> "TilingPlan":
        if tile > height or tile > width:
            raise ValueError(f"tile {tile} larger than image {height}x{width}")
        if not 0.0 <= overlap < 1.0:
            raise ValueError(f"overlap must be in [0, 1), got {overlap}")
        step = max(1, tile - int(tile * overlap))
        rows = _starts(height, tile, step)
        cols = _starts(width, tile, step)
        boxes = tuple(
            BBox(r, c, r + tile - 1, c + tile - 1) for r in rows for c in cols
        )
        return cls(tile, overlap, boxes)


def _starts(size: int, tile: int, step: int) -> list[int]:
    starts = list(range(0, max(size - tile, 0) + 1, step))
    if starts[-1] != size - tile:
        starts.append(size - tile)
    return starts


@dataclass(frozen=True)
class DetectSettings:
    mode: str = "softmax"
    temperature: float = 100.0
    tile: int = 256
    tile_overlap: float = 0.5


def class_scores(
    embedding: Raster,
    text: TextEmbeddingSet,
    mode: str = "softmax",
    temperature: float = 100.0,
) -> ClassScoreMap:
    """Cosine similarity of every pixel embedding against each category's
    text embedding; softmax mode applies a per-pixel temperature softmax
    over the categories."""
    if embedding.channels != text.d_sem:
        raise ValueError(f"embedding width {embedding.channels} != text width {text.d_sem}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    vecs = embedding.values.astype(np.float64)
    norms = np.linalg.norm(vecs, axis=2, keepdims=True)
    norms = np.maximum(norms, 1e-12)
    s = (vecs / norms) @ text.vectors.T  # (H, W, K)
    if mode == "softmax":
        z = temperature * s
        z -= z.max(axis=2, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=2, keepdims=True)
    elif mode != "logit":
        raise ValueError(f"unknown scoring mode {mode!r}")
    return ClassScoreMap(Raster(s.astype(np.float32)), text.categories, mode)


def change_likelihood(s1: ClassScoreMap, s2: ClassScoreMap) -> ChangeLikelihoodMap:
    """Per-category squared difference of the two epochs' score maps."""
    if s1.categories != s2.categories:
        raise ValueError("category sets differ between epochs")
    if s1.mode != s2.mode:
        raise ValueError("scoring modes differ between epochs")
    if s1.scores.shape != s2.scores.shape:
        raise ValueError(f"shape mismatch {s1.scores.shape} vs {s2.scores.shape}")
    d = (s1.scores.values.astype(np.float64) - s2.scores.values.astype(np.float64)) ** 2
    return ChangeLikelihoodMap(Raster(d.astype(np.float32)), s1.categories)


def tile_and_stitch(image: Raster, tile: int, overlap: float, per_tile) -> Raster:
    """Apply `per_tile` to overlapping tiles and blend the outputs with a
    raised-cosine partition of unity. `per_tile` must preserve spatial
    shape (channel count may change)."""
    plan = TilingPlan.build(image.height, image.width, tile, overlap)
    ramp = np.sin(np.pi * (np.arange(tile) + 0.5) / tile) ** 2
    w2d = np.outer(ramp, ramp)[:, :, None]
    acc = None
    wsum = np.zeros((image.height, image.width, 1), dtype=np.float64)
    for box in plan.placements:
        crop = Raster(image.values[box.row_min : box.row_max + 1, box.col_min : box.col_max + 1])
        out = per_tile(crop)
        if (out.height, out.width) != (tile, tile):
            raise ValueError("per_tile must preserve the tile's spatial shape")
        if acc is None:
            acc = np.zeros((image.height, image.width, out.channels), dtype=np.float64)
        acc[box.row_min : box.row_max + 1, box.col_min : box.col_max + 1] += w2d * out.values
        wsum[box.row_min : box.row_max + 1, box.col_min : box.col_max + 1] += w2d
    return Raster((acc / wsum).astype(np.float32))


def score_image(
    image: Raster,
    model: AlignmentModel | None,
    bundle: EncoderBundle,
    text: TextEmbeddingSet,
    settings: DetectSettings = DetectSettings(),
) -> ClassScoreMap:
    """Full-image class scores at the input resolution.

    Images larger than the tile size are scored tile by tile and
    stitched; smaller images are resized through the encoder input size.
    With `model=None` the scores come from the raw sliding-window semantic
    features upsampled to image resolution (the alignment-free ablation
    path)."""
    h, w = image.height, image.width
    if h > settings.tile or w > settings.tile:
        if min(h, w) < settings.tile:
            # mixed case: upscale the short side so tiling applies
            nh, nw = max(h, settings.tile), max(w, settings.tile)
            scored = tile_and_stitch(
                bilinear_resize(image, nh, nw),
                settings.tile,
                settings.tile_overlap,
                lambda t: _score_window(t, model, bundle, text, settings).scores,
            )
            scores = bilinear_resize(Raster(scored.values), h, w)
        else:
            scores = tile_and_stitch(
                image,
                settings.tile,
                settings.tile_overlap,
                lambda t: _score_window(t, model, bundle, text, settings).scores,
            )
        return ClassScoreMap(scores, text.categories, settings.mode)
    return _score_window(image, model, bundle, text, settings)


def _score_window(
    window: Raster,
    model: AlignmentModel | None,
    bundle: EncoderBundle,
    text: TextEmbeddingSet,
    settings: DetectSettings,
) -> ClassScoreMap:
    size = bundle.spatial.config.input_size
    h, w = window.height, window.width
    work = window if (h, w) == (size, size) else bilinear_resize(window, size, size)
    if model is not None:
        feats = encode_spatial(bundle.spatial, work)
        embedding = model.inference_embedding(feats)
    else:
        sem = sliding_window_encode(bundle.semantic, work, bundle.window, bundle.overlap)
        embedding = bilinear_resize(sem.features, size, size)
    scored = class_scores(embedding, text, settings.mode, settings.temperature)
    if (h, w) != (size, size):
        scored = ClassScoreMap(
            bilinear_resize(scored.scores, h, w), text.categories, settings.mode
        )
    return scored


def detect_pair(
    image1: Raster,
    image2: Raster,
    model: AlignmentModel | None,
    bundle: EncoderBundle,
    text: TextEmbeddingSet,
    settings: DetectSettings = DetectSettings(),
) -> ChangeLikelihoodMap:
    """Score both epochs and difference the maps (Eq.-style squared
    difference, symmetric in temporal order)."""
    if (image1.height, image1.width) != (image2.height, image2.width):
        raise ValueError(
            f"temporal images differ in shape: {image1.shape} vs {image2.shape}"
        )
    s1 = score_image(image1, model, bundle, text, settings)
    s2 = score_image(image2, model, bundle, text, settings)
    return change_likelihood(s1, s2)


def save_likelihood(directory, pair_id: str, clm: ChangeLikelihoodMap) -> list[str]:
    """Write `<pair-id>.likelihood.uvcd` plus one normalized 8-bit heatmap
    PNG per category; returns the written paths."""
    from pathlib import Path

    from .core import write_image_png

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    container = directory / f"{pair_id}.likelihood.uvcd"
    write_raster(container, clm.likelihood)
    paths.append(str(container))
    for k, name in enumerate(clm.categories):
        safe = name.replace(" ", "_")
        png = directory / f"{pair_id}.{safe}.heatmap.png"
        write_image_png(png, minmax_normalize(clm.likelihood.channel(k)))
        paths.append(str(png))
    return paths
