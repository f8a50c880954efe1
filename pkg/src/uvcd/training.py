"""Unsupervised training loop: unpaired single images, frozen encoders,
decoupled-weight-decay adaptive-moment updates on the alignment module
only. Frozen encoder outputs are cached so each unique image is encoded
once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .alignment import AlignmentConfig, AlignmentModel, save_checkpoint
from .core import Raster, bilinear_resize
from .encoders import EncoderBundle, content_id, encode_spatial, sliding_window_encode
from .losses import LossBreakdown, LossWeights, mcs_loss, mse_loss


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 3
    epochs: int = 30
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    ablation_no_recon: bool = False

    def __post_init__(self):
        # zero is allowed so an lr-0 update can be asserted to be the identity
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def effective_weights(self) -> LossWeights:
        return self.weights.without_recon() if self.ablation_no_recon else self.weights


class FeatureSource:
    """Frozen-encoder outputs for training, memoized by image content.

    Yields per image: the multi-scale spatial levels plus the semantic map
    resampled to the alignment heads' resolution (the finest level).
    """

    def __init__(self, bundle: EncoderBundle):
        self.bundle = bundle
        self._memo: dict[str, tuple[list[np.ndarray], np.ndarray]] = {}

    def get(self, image: Raster) -> tuple[list[np.ndarray], np.ndarray]:
        key = content_id(image)
        if key in self._memo:
            return self._memo[key]
        n_levels = len(self.bundle.spatial.config.strides)
        cached = self.bundle.cache.get(key, self.bundle, n_levels) if self.bundle.cache else None
        if cached is not None:
            levels, semantic = cached
            entry = ([lv.values for lv in levels], semantic.values)
        else:
            feats = encode_spatial(self.bundle.spatial, image)
            sem = sliding_window_encode(
                self.bundle.semantic, image, self.bundle.window, self.bundle.overlap
            )
            head_size = feats.levels[0].height
            target = bilinear_resize(sem.features, head_size, head_size)
            if self.bundle.cache is not None:
                self.bundle.cache.put(key, self.bundle, feats.levels, target)
            entry = ([lv.values for lv in feats.levels], target.values)
        self._memo[key] = entry
        return entry


@dataclass
class TrainState:
    model: AlignmentModel
    optimizer: torch.optim.Optimizer
    step: int = 0
    log: list[LossBreakdown] = field(default_factory=list)


def make_state(model: AlignmentModel, cfg: TrainConfig) -> TrainState:
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(0.9, 0.999),
        eps=1e-8,
        weight_decay=cfg.weight_decay,
    )
    return TrainState(model=model, optimizer=optimizer)


def train_step(
    state: TrainState,
    batch: list[Raster],
    source: FeatureSource | EncoderBundle,
    cfg: TrainConfig,
) -> TrainState:
    """One optimizer update from the batch-averaged objective."""
    if not batch:
        raise ValueError("empty batch")
    if isinstance(source, EncoderBundle):
        source = FeatureSource(source)
    encoded = [source.get(img) for img in batch]
    n_levels = len(encoded[0][0])
    dtype = next(state.model.parameters()).dtype
    level_tensors = [
        torch.from_numpy(np.stack([e[0][i] for e in encoded])).permute(0, 3, 1, 2).to(dtype)
        for i in range(n_levels)
    ]
    sem_target = torch.from_numpy(np.stack([e[1] for e in encoded])).permute(0, 3, 1, 2).to(dtype)

    weights = cfg.effective_weights()
    state.model.train()
    recons, sem_cos, sem_mse, _ = state.model(level_tensors)

    recon_terms = []
    for i in range(n_levels):
        pred = recons[i] if weights.recon[i] > 0 else recons[i].detach()
        recon_terms.append(mse_loss(pred, level_tensors[i]))
    cos_term = mcs_loss(sem_cos, sem_target, channel_axis=1)
    mse_term = mse_loss(sem_mse, sem_target)

    total = cos_term * weights.align_cos + mse_term * weights.align_mse
    for w, term in zip(weights.recon, recon_terms):
        if w > 0:
            total = total + w * term

    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()

    breakdown = LossBreakdown.from_components(
        [float(t.detach()) for t in recon_terms],
        float(cos_term.detach()),
        float(mse_term.detach()),
        weights,
    )
    state.log.append(breakdown)
    state.step += 1
    return state


def default_model_config(bundle: EncoderBundle) -> AlignmentConfig:
    cfg = bundle.spatial.config
    return AlignmentConfig(
        strides=cfg.strides,
        channels=cfg.channels,
        d_sem=bundle.semantic.d_sem,
        adapter_hidden=bundle.semantic.d_sem,
    )


def train(
    images: list[Raster],
    bundle: EncoderBundle,
    cfg: TrainConfig,
    model: AlignmentModel | None = None,
    out_dir=None,
) -> TrainState:
    """Run the full loop: `epochs` x ceil(N / batch) steps over per-epoch
    shuffles of the unpaired image list. Returns the final TrainState;
    when out_dir is given also writes `alignment.ckpt` and `train_log.jsonl`.
    """
    if not images:
        raise ValueError("empty dataset")
    if model is None:
        model = AlignmentModel(default_model_config(bundle), seed=cfg.seed)
    state = make_state(model, cfg)
    source = FeatureSource(bundle)
    rng = np.random.default_rng(cfg.seed)
    n = len(images)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = [images[i] for i in order[lo : lo + cfg.batch_size]]
            train_step(state, batch, source, cfg)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / "alignment.ckpt", state.model, step=state.step)
        write_log(out_dir / "train_log.jsonl", state.log)
    return state


def write_log(path, log: list[LossBreakdown]) -> None:
    lines = [json.dumps(b.to_record(i + 1), sort_keys=True) for i, b in enumerate(log)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_log(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
