"""Mask-matching change-detection baseline.

Concept-segment both epochs (externally), filter masks by confidence,
greedily match masks across epochs by IoU, and mark everything that
failed to match as change. Matching is greedy over descending IoU with
deterministic index tie-breaks; pairs below the match threshold are never
formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BinaryMask, read_mask_png


@dataclass(frozen=True)
class MaskSet:
    masks: tuple[BinaryMask, ...]
    confidences: tuple[float, ...]
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        if len(self.masks) != len(self.confidences):
            raise ValueError("one confidence per mask required")
        if any(not 0.0 <= c <= 1.0 for c in self.confidences):
            raise ValueError("confidences must lie in [0, 1]")
        shape = self.shape
        for m in self.masks:
            if shape is None:
                shape = m.shape
            elif m.shape != shape:
                raise ValueError(f"masks must share one shape, got {m.shape} vs {shape}")
        object.__setattr__(self, "masks", tuple(self.masks))
        object.__setattr__(self, "confidences", tuple(float(c) for c in self.confidences))
        object.__setattr__(self, "shape", shape)

    def __len__(self) -> int:
        return len(self.masks)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched1: tuple[int, ...]
    unmatched2: tuple[int, ...]


def filter_by_confidence(s: MaskSet, c: float) -> MaskSet:
    """Keep masks with confidence >= c, order preserved."""
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"confidence threshold must be in [0, 1], got {c}")
    kept = [(m, conf) for m, conf in zip(s.masks, s.confidences) if conf >= c]
    return MaskSet(tuple(m for m, _ in kept), tuple(conf for _, conf in kept), shape=s.shape)


def mask_iou_matrix(m1: MaskSet, m2: MaskSet) -> np.ndarray:
    iou = np.zeros((len(m1), len(m2)), dtype=np.float64)
    flat1 = [m.values.astype(bool).ravel() for m in m1.masks]
    flat2 = [m.values.astype(bool).ravel() for m in m2.masks]
    for i, a in enumerate(flat1):
        for j, b in enumerate(flat2):
            inter = np.logical_and(a, b).sum()
            union = np.logical_or(a, b).sum()
            iou[i, j] = inter / union if union else 0.0
    return iou


def greedy_match(iou: np.ndarray, theta: float) -> MatchResult:
    """Greedy matching over an IoU table in descending IoU order (ties
    broken by lower index pair); pairs with IoU < theta are not formed."""
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    n1, n2 = iou.shape
    order = sorted(
        ((i, j) for i in range(n1) for j in range(n2)),
        key=lambda ij: (-iou[ij], ij[0], ij[1]),
    )
    used1, used2 = set(), set()
    pairs = []
    for i, j in order:
        if iou[i, j] < theta:
            break
        if i in used1 or j in used2:
            continue
        pairs.append((i, j, float(iou[i, j])))
        used1.add(i)
        used2.add(j)
    unmatched1 = tuple(i for i in range(n1) if i not in used1)
    unmatched2 = tuple(j for j in range(n2) if j not in used2)
    return MatchResult(tuple(pairs), unmatched1, unmatched2)


def match_masks(m1: MaskSet, m2: MaskSet, theta: float) -> MatchResult:
    """Greedy cross-epoch matching on the masks' IoU table."""
    if m1.shape is not None and m2.shape is not None and m1.shape != m2.shape:
        raise ValueError(f"mask sets differ in shape: {m1.shape} vs {m2.shape}")
    return greedy_match(mask_iou_matrix(m1, m2), theta)


def change_map(m1: MaskSet, m2: MaskSet, result: MatchResult) -> BinaryMask:
    """Union of all unmatched masks from both epochs."""
    shape = m1.shape or m2.shape
    if shape is None:
        raise ValueError("cannot infer the map shape from two empty mask sets")
    out = np.zeros(shape, dtype=np.uint8)
    for i in result.unmatched1:
        out |= m1.masks[i].values
    for j in result.unmatched2:
        out |= m2.masks[j].values
    return BinaryMask(out)


def mask_set_from_concept(refiner, image, prompt: str, confidence: float = 1.0) -> MaskSet:
    """Build a mask set from a concept-capable refiner (one mask per
    segmented instance of the prompted category)."""
    masks = tuple(refiner.concept_segment(image, prompt))
    return MaskSet(masks, tuple([confidence] * len(masks)), shape=(image.height, image.width))


def load_mask_set(directory, shape: tuple[int, int] | None = None) -> MaskSet:
    """Read a directory of PNG masks plus an optional `confidences.txt`
    manifest (`<filename> <confidence>` lines; unlisted masks get 1.0)."""
    directory = Path(directory)
    confidences = {}
    manifest = directory / "confidences.txt"
    if manifest.exists():
        for line in manifest.read_text().splitlines():
            parts = line.split()
            if len(parts) == 2:
                confidences[parts[0]] = float(parts[1])
    masks, confs = [], []
    for path in sorted(directory.glob("*.png")):
        masks.append(read_mask_png(path))
        confs.append(confidences.get(path.name, 1.0))
    return MaskSet(tuple(masks), tuple(confs), shape=shape)
