"""Synthetic bi-temporal scenes for desk-scale training and testing.

Scenes are flat-background rasters with non-overlapping textured
rectangles drawn in the toy palette colors, so the toy semantic encoder
can actually tell the categories apart. A pair shares its background and
all static objects; change objects exist in exactly one epoch. Epoch B
gets a small global illumination shift and both epochs get independent
sensor noise, providing the pseudo-changes the post-processing stage is
supposed to suppress.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BBox, BinaryMask, Raster, write_image_png, write_mask_png
from .encoders import TOY_PALETTE

BACKGROUND_RGB = (0.78, 0.77, 0.73)
CHANGE_CATEGORIES = ("architecture", "road", "vegetation", "water")


@dataclass(frozen=True)
class SceneObject:
    category: str
    box: BBox
    in_a: bool
    in_b: bool


def _texture(rng: np.random.Generator, color, h: int, w: int) -> np.ndarray:
    base = np.asarray(color, dtype=np.float32)
    rows = np.arange(h, dtype=np.float32)[:, None, None]
    cols = np.arange(w, dtype=np.float32)[None, :, None]
    phase = rng.uniform(0, 2 * np.pi)
    stripes = 0.05 * np.sin(2 * np.pi * (rows + cols) / 12.0 + phase)
    speckle = rng.normal(0.0, 0.02, size=(h, w, 3)).astype(np.float32)
    return np.clip(base[None, None, :] + stripes + speckle, 0.0, 1.0)


def _place_box(
    rng: np.random.Generator, size: int, side_lo: int, side_hi: int, occupied: list[BBox]
) -> BBox | None:
    side_hi = min(side_hi, size - 8)
    side_lo = max(4, min(side_lo, side_hi))
    for _ in range(60):
        h = int(rng.integers(side_lo, side_hi + 1))
        w = int(rng.integers(side_lo, side_hi + 1))
        r0 = int(rng.integers(2, size - h - 2))
        c0 = int(rng.integers(2, size - w - 2))
        box = BBox(r0, c0, r0 + h - 1, c0 + w - 1)
        margin = 4
        clash = any(
            not (
                box.row_max + margin < o.row_min
                or o.row_max + margin < box.row_min
                or box.col_max + margin < o.col_min
                or o.col_max + margin < box.col_min
            )
            for o in occupied
        )
        if not clash:
            return box
    return None


def _paint(canvas: np.ndarray, box: BBox, patch: np.ndarray) -> None:
    canvas[box.row_min : box.row_max + 1, box.col_min : box.col_max + 1] = patch


def make_scene_pair(
    rng: np.random.Generator,
    size: int = 256,
    target: str = "architecture",
    n_target_changes: int = 2,
    n_other_changes: int = 2,
    n_static: int = 3,
    target_side: tuple[int, int] = (40, 96),
    other_side: tuple[int, int] = (24, 72),
    illumination: float = 0.02,
    sensor_noise: float = 0.01,
) -> tuple[Raster, Raster, BinaryMask]:
    """One bi-temporal pair plus the target-category change ground truth.

    Change objects of non-target categories are included so per-category
    attribution is actually exercised: they must not appear in the target
    ground truth and must not fire the target likelihood channel.
    """
    background = _texture(rng, BACKGROUND_RGB, size, size)
    img_a = background.copy()
    img_b = background.copy()
    gt = np.zeros((size, size), dtype=np.uint8)

    occupied: list[BBox] = []
    objects: list[SceneObject] = []

    other_pool = [c for c in CHANGE_CATEGORIES if c != target]
    for _ in range(n_static):
        cat = str(rng.choice(list(TOY_PALETTE)))
        box = _place_box(rng, size, *other_side, occupied)
        if box:
            occupied.append(box)
            objects.append(SceneObject(cat, box, True, True))
    for _ in range(n_target_changes):
        box = _place_box(rng, size, *target_side, occupied)
        if box:
            occupied.append(box)
            inserted = bool(rng.integers(0, 2))
            objects.append(SceneObject(target, box, not inserted, inserted))
    for _ in range(n_other_changes):
        cat = str(rng.choice(other_pool))
        box = _place_box(rng, size, *other_side, occupied)
        if box:
            occupied.append(box)
            inserted = bool(rng.integers(0, 2))
            objects.append(SceneObject(cat, box, not inserted, inserted))

    for obj in objects:
        patch = _texture(rng, TOY_PALETTE[obj.category], obj.box.height, obj.box.width)
        if obj.in_a:
            _paint(img_a, obj.box, patch)
        if obj.in_b:
            _paint(img_b, obj.box, patch)
        if obj.category == target and obj.in_a != obj.in_b:
            gt[obj.box.row_min : obj.box.row_max + 1, obj.box.col_min : obj.box.col_max + 1] = 1

    img_b = img_b * (1.0 + rng.uniform(-illumination, illumination))
    img_a = img_a + rng.normal(0.0, sensor_noise, img_a.shape).astype(np.float32)
    img_b = img_b + rng.normal(0.0, sensor_noise, img_b.shape).astype(np.float32)
    return (
        Raster(np.clip(img_a, 0.0, 1.0).astype(np.float32)),
        Raster(np.clip(img_b, 0.0, 1.0).astype(np.float32)),
        BinaryMask(gt),
    )


def make_training_patches(rng: np.random.Generator, n: int, size: int = 256) -> list[Raster]:
    """Unpaired single-epoch scenes covering all palette categories."""
    patches = []
    categories = list(TOY_PALETTE)
    for _ in range(n):
        canvas = _texture(rng, BACKGROUND_RGB, size, size)
        occupied: list[BBox] = []
        # object-dense scenes, every category represented, so the
        # alignment objective cannot be satisfied by predicting the
        # background direction everywhere
        wanted = categories + [str(rng.choice(categories)) for _ in range(7)]
        for cat in wanted:
            box = _place_box(rng, size, 28, 96, occupied)
            if box:
                occupied.append(box)
                _paint(canvas, box, _texture(rng, TOY_PALETTE[cat], box.height, box.width))
        canvas = canvas + rng.normal(0.0, 0.01, canvas.shape).astype(np.float32)
        patches.append(Raster(np.clip(canvas, 0.0, 1.0).astype(np.float32)))
    return patches


def build_synthetic_dataset(
    root,
    n_pairs: int,
    seed: int = 0,
    target: str = "architecture",
    size: int = 256,
    **pair_kwargs,
) -> list[str]:
    """Write an A/B/label PNG dataset; returns pair names."""
    root = Path(root)
    for sub in ("A", "B", "label"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = []
    for i in range(n_pairs):
        a, b, gt = make_scene_pair(rng, size=size, target=target, **pair_kwargs)
        name = f"pair_{i:03d}.png"
        write_image_png(root / "A" / name, a)
        write_image_png(root / "B" / name, b)
        write_mask_png(root / "label" / name, gt)
        names.append(name)
    return names
