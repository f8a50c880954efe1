"""Change-detection metrics and dataset adapters.

Precision, recall, F1 and IoU are computed for the changed class from
pixel confusion counts; binary mIoU averages the changed and unchanged
class IoUs. Dataset evaluation walks a bi-temporal directory layout
(epoch A / epoch B / labels, filename-matched) and either aggregates
counts over all images (default) or averages per-image metrics.

Degenerate 0/0 ratios are defined as 0 for the changed class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BinaryMask, read_mask_png
from PIL import Image


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    iou: float


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = pred.values.astype(bool)
    g = gt.values.astype(bool)
    return ConfusionCounts(
        tp=int(np.logical_and(p, g).sum()),
        fp=int(np.logical_and(p, ~g).sum()),
        fn=int(np.logical_and(~p, g).sum()),
        tn=int(np.logical_and(~p, ~g).sum()),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(counts: ConfusionCounts) -> ClassMetrics:
    """Changed-class precision, recall, F1 and IoU (0/0 -> 0)."""
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio(2 * p * r, p + r)
    iou = _ratio(counts.tp, counts.tp + counts.fp + counts.fn)
    return ClassMetrics(p, r, f1, iou)


def binary_miou(counts: ConfusionCounts) -> float:
    """Mean IoU over the changed and unchanged classes."""
    iou_change = _ratio(counts.tp, counts.tp + counts.fp + counts.fn)
    iou_nochange = _ratio(counts.tn, counts.tn + counts.fn + counts.fp)
    return 0.5 * (iou_change + iou_nochange)


@dataclass(frozen=True)
class DatasetLayout:
    """Bi-temporal benchmark directory layout.

    `labels` holds one subdir name for binary change labels, or two
    (epoch A, epoch B) for semantic-pair label maps whose pixel values
    index into `categories`.
    """

    root: str
    epoch_a: str = "A"
    epoch_b: str = "B"
    labels: tuple[str, ...] = ("label",)
    semantics: str = "binary"
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.semantics not in ("binary", "semantic-pair"):
            raise ValueError(f"unknown label semantics {self.semantics!r}")
        if self.semantics == "binary" and len(self.labels) != 1:
            raise ValueError("binary layouts need exactly one label subdir")
        if self.semantics == "semantic-pair":
            if len(self.labels) != 2:
                raise ValueError("semantic-pair layouts need two label subdirs")
            if not self.categories:
                raise ValueError("semantic-pair layouts need a category list")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "categories", tuple(self.categories))

    def label_files(self) -> list[Path]:
        return sorted((Path(self.root) / self.labels[0]).glob("*.png"))


@dataclass
class MetricReport:
    per_class: dict[str, ClassMetrics] = field(default_factory=dict)
    counts: dict[str, ConfusionCounts] = field(default_factory=dict)
    miou: float | None = None
    mode: str = "aggregate"
    missing: list[str] = field(default_factory=list)

    def to_json_text(self) -> str:
        doc = {
            "mode": self.mode,
            "miou": self.miou,
            "missing": sorted(self.missing),
            "per_class": {
                name: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "iou": m.iou,
                    "counts": {
                        "tp": self.counts[name].tp,
                        "fp": self.counts[name].fp,
                        "fn": self.counts[name].fn,
                        "tn": self.counts[name].tn,
                    }
                    if name in self.counts
                    else None,
                }
                for name, m in self.per_class.items()
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Human-readable table, columns P, R, F1, IoU, mIoU (percent)."""
        header = f"{'class':<16}{'P':>8}{'R':>8}{'F1':>8}{'IoU':>8}{'mIoU':>8}"
        lines = [header, "-" * len(header)]
        for name, m in self.per_class.items():
            miou = f"{100 * self.miou:7.1f}" if self.miou is not None else f"{'-':>7}"
            lines.append(
                f"{name:<16}{100 * m.precision:7.1f} {100 * m.recall:7.1f} "
                f"{100 * m.f1:7.1f} {100 * m.iou:7.1f} {miou}"
            )
        if self.missing:
            lines.append(f"missing predictions: {', '.join(sorted(self.missing))}")
        return "\n".join(lines)


def semantic_pair_change_gt(label_a: np.ndarray, label_b: np.ndarray, category_index: int) -> BinaryMask:
    """A pixel changed *for* a category iff exactly one epoch's label is
    that category."""
    a = label_a == category_index
    b = label_b == category_index
    return BinaryMask(np.logical_xor(a, b).astype(np.uint8))


def _read_label_indices(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.int64)


def _safe(name: str) -> str:
    return name.replace(" ", "_")


def evaluate_dataset(pred_dir, layout: DatasetLayout, mode: str = "aggregate") -> MetricReport:
    """Score a directory of predicted masks against a labeled dataset.

    Binary layouts expect `<name>.png` predictions; semantic-pair layouts
    expect `<stem>.<category>.png` per evaluated category. Pairs without a
    prediction are skipped and listed in the report.
    """
    if mode not in ("aggregate", "per-image-mean"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    pred_dir = Path(pred_dir)
    report = MetricReport(mode=mode)
    label_files = layout.label_files()
    if not label_files:
        raise ValueError(f"no label files under {layout.root}/{layout.labels[0]}")

    if layout.semantics == "binary":
        pairs = []
        for lf in label_files:
            pf = pred_dir / lf.name
            if not pf.exists():
                report.missing.append(lf.name)
                continue
            pairs.append((read_mask_png(pf), read_mask_png(lf)))
        _fill_binary_report(report, "change", pairs, mode)
        return report

    root = Path(layout.root)
    for k, category in enumerate(layout.categories):
        pairs = []
        for lf in label_files:
            pf = pred_dir / f"{lf.stem}.{_safe(category)}.png"
            if not pf.exists():
                if f"{lf.name}" not in report.missing:
                    report.missing.append(f"{lf.stem}.{_safe(category)}.png")
                continue
            la = _read_label_indices(root / layout.labels[0] / lf.name)
            lb = _read_label_indices(root / layout.labels[1] / lf.name)
            pairs.append((read_mask_png(pf), semantic_pair_change_gt(la, lb, k)))
        _fill_binary_report(report, category, pairs, mode, include_miou=False)
    return report


def _fill_binary_report(report, class_name, pairs, mode, include_miou=True):
    if not pairs:
        return
    if mode == "aggregate":
        total = ConfusionCounts()
        for pred, gt in pairs:
            total = total + confusion(pred, gt)
        report.per_class[class_name] = metrics(total)
        report.counts[class_name] = total
        if include_miou:
            report.miou = binary_miou(total)
    else:
        per_image = [metrics(confusion(p, g)) for p, g in pairs]
        mious = [binary_miou(confusion(p, g)) for p, g in pairs]
        report.per_class[class_name] = ClassMetrics(
            float(np.mean([m.precision for m in per_image])),
            float(np.mean([m.recall for m in per_image])),
            float(np.mean([m.f1 for m in per_image])),
            float(np.mean([m.iou for m in per_image])),
        )
        report.counts[class_name] = ConfusionCounts()
        if include_miou:
            report.miou = float(np.mean(mious))
