"""Unsupervised objective: per-scale reconstruction (squared error) plus
two semantic alignment terms (mean cosine distance and squared error),
combined with non-negative balancing weights. Reconstruction is weighted
roughly two orders of magnitude below alignment by default.

The loss functions accept rasters / numpy arrays (returning floats) or
torch tensors (returning differentiable scalars).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .core import DegenerateInputError, Raster


def _unwrap(x):
    if isinstance(x, Raster):
        return x.values
    return x


def mse_loss(a, b):
    """Mean squared elementwise difference: (1/N) sum (a_i - b_i)^2."""
    a, b = _unwrap(a), _unwrap(b)
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if isinstance(a, torch.Tensor):
        return ((a - b) ** 2).mean()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(((a - b) ** 2).mean())


def mcs_loss(a, b, channel_axis: int = -1):
    """One minus the mean cosine similarity over positions.

    A position is one channel vector (per-pixel). Positions where either
    vector is exactly zero are excluded from the mean; if every position
    is zero the input is degenerate.
    """
    a, b = _unwrap(a), _unwrap(b)
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if isinstance(a, torch.Tensor):
        af = torch.movedim(a, channel_axis, -1).reshape(-1, a.shape[channel_axis])
        bf = torch.movedim(b, channel_axis, -1).reshape(-1, b.shape[channel_axis])
        na = af.norm(dim=1)
        nb = bf.norm(dim=1)
        valid = (na > 0) & (nb > 0)
        if not bool(valid.any()):
            raise DegenerateInputError("all positions are zero vectors")
        cos = (af[valid] * bf[valid]).sum(dim=1) / (na[valid] * nb[valid])
        return 1.0 - cos.mean()
    af = np.moveaxis(np.asarray(a, dtype=np.float64), channel_axis, -1).reshape(-1, a.shape[channel_axis])
    bf = np.moveaxis(np.asarray(b, dtype=np.float64), channel_axis, -1).reshape(-1, b.shape[channel_axis])
    na = np.linalg.norm(af, axis=1)
    nb = np.linalg.norm(bf, axis=1)
    valid = (na > 0) & (nb > 0)
    if not valid.any():
        raise DegenerateInputError("all positions are zero vectors")
    cos = (af[valid] * bf[valid]).sum(axis=1) / (na[valid] * nb[valid])
    return float(1.0 - cos.mean())


@dataclass(frozen=True)
class LossWeights:
    recon: tuple[float, float, float] = (0.01, 0.01, 0.01)
    align_cos: float = 1.0
    align_mse: float = 1.0

    def __post_init__(self):
        values = (*self.recon, self.align_cos, self.align_mse)
        if any(v < 0 for v in values):
            raise ValueError("loss weights must be non-negative")
        if not any(v > 0 for v in values):
            raise ValueError("at least one loss weight must be positive")
        object.__setattr__(self, "recon", tuple(self.recon))

    def without_recon(self) -> "LossWeights":
        return LossWeights(tuple(0.0 for _ in self.recon), self.align_cos, self.align_mse)


@dataclass(frozen=True)
class LossBreakdown:
    recon: tuple[float, ...]
    align_cos: float
    align_mse: float
    total: float

    @classmethod
    def from_components(cls, recon, align_cos, align_mse, weights: LossWeights) -> "LossBreakdown":
        recon = tuple(float(r) for r in recon)
        if len(recon) != len(weights.recon):
            raise ValueError(f"{len(recon)} recon terms but {len(weights.recon)} weights")
        total = (
            sum(w * r for w, r in zip(weights.recon, recon))
            + weights.align_cos * float(align_cos)
            + weights.align_mse * float(align_mse)
        )
        return cls(recon, float(align_cos), float(align_mse), total)

    def to_record(self, step: int) -> dict:
        rec = {"step": step}
        rec.update({f"recon{i}": r for i, r in enumerate(self.recon)})
        rec.update({"align_cos": self.align_cos, "align_mse": self.align_mse, "total": self.total})
        return rec


def total_loss(recon_pairs, cos_pair, mse_pair, weights: LossWeights) -> LossBreakdown:
    """Evaluate every component on (prediction, target) pairs and combine.

    recon_pairs: one pair per spatial scale; cos_pair/mse_pair: semantic
    head outputs vs. the frozen semantic map at head resolution.
    """
    recon = [mse_loss(p, t) for p, t in recon_pairs]
    return LossBreakdown.from_components(
        recon, mcs_loss(*cos_pair), mse_loss(*mse_pair), weights
    )
