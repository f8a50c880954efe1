"""Trainable module aligning frozen multi-scale spatial features with the
frozen semantic embedding space.

Structure: one residual adapter per scale (1x1 conv -> channelwise norm +
GELU -> 3x3 conv), a coarse-to-fine fusion path (2x bilinear upsampling
with residual 3x3 convs and one depthwise-conv block stack per level),
three reconstruction heads projecting the per-level fused maps back onto
the spatial encoder's channels, and two semantic heads projecting the
fused map into the semantic space (one trained under a cosine objective,
one under squared error; inference uses the cosine head).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .core import Raster
from .encoders import MultiScaleFeatures

CHECKPOINT_MAGIC = b"UVCK"


@dataclass(frozen=True)
class AlignmentConfig:
    strides: tuple[int, ...] = (4, 8, 16)
    channels: tuple[int, ...] = (32, 64, 128)
    d_sem: int = 32
    adapter_hidden: int = 32
    blocks_per_level: int = 1
    expand: int = 4

    def __post_init__(self):
        if len(self.strides) < 2:
            raise ValueError("need at least two scales to fuse")
        if len(self.strides) != len(self.channels):
            raise ValueError("strides and channels must have equal length")
        for a, b in zip(self.strides, self.strides[1:]):
            if b != 2 * a:
                raise ValueError(f"fusion expects octave-spaced strides, got {self.strides}")

    @property
    def n_levels(self) -> int:
        return len(self.strides)


class LayerNorm2d(nn.Module):
    """LayerNorm over the channel dimension of (B, C, H, W) maps."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(dim=1, keepdim=True)
        var = (x - mu).pow(2).mean(dim=1, keepdim=True)
        xn = (x - mu) / torch.sqrt(var + self.eps)
        return xn * self.weight[None, :, None, None] + self.bias[None, :, None, None]


class Adapter(nn.Module):
    """Two-layer convolutional adapter: pointwise channel mapping, then a
    3x3 conv for local context, with a skip connection when the channel
    widths allow it."""

    def __init__(self, c_in: int, hidden: int, c_out: int):
        super().__init__()
        self.c_in = c_in
        self.c_out = c_out
        self.pointwise = nn.Conv2d(c_in, hidden, 1)
        self.norm = LayerNorm2d(hidden)
        self.local = nn.Conv2d(hidden, c_out, 3, padding=1)
        self.use_skip = c_in == c_out

    def forward(self, x):
        if x.shape[1] != self.c_in:
            raise ValueError(f"adapter expects {self.c_in} channels, got {x.shape[1]}")
        y = self.local(F.gelu(self.norm(self.pointwise(x))))
        return x + y if self.use_skip else y


class ConvBlock(nn.Module):
    """Depthwise 7x7 conv, channel norm, pointwise expand/contract MLP,
    residual add."""

    def __init__(self, dim: int, expand: int = 4):
        super().__init__()
        self.dw = nn.Conv2d(dim, dim, 7, padding=3, groups=dim)
        self.norm = LayerNorm2d(dim)
        self.pw1 = nn.Conv2d(dim, expand * dim, 1)
        self.pw2 = nn.Conv2d(expand * dim, dim, 1)

    def forward(self, x):
        y = self.pw2(F.gelu(self.pw1(self.norm(self.dw(x)))))
        return x + y


class ProjectionHead(nn.Module):
    """Two pointwise linear maps with one nonlinearity in between."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.fc1 = nn.Conv2d(c_in, c_in, 1)
        self.fc2 = nn.Conv2d(c_in, c_out, 1)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class AlignmentModel(nn.Module):
    def __init__(self, config: AlignmentConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        d = config.d_sem
        self.adapters = nn.ModuleList(
            Adapter(c, config.adapter_hidden, d) for c in config.channels
        )
        self.blocks = nn.ModuleList(
            nn.Sequential(*[ConvBlock(d, config.expand) for _ in range(config.blocks_per_level)])
            for _ in range(config.n_levels)
        )
        self.upsample_convs = nn.ModuleList(
            nn.Conv2d(d, d, 3, padding=1) for _ in range(config.n_levels - 1)
        )
        self.recon_heads = nn.ModuleList(ProjectionHead(d, c) for c in config.channels)
        self.sem_head_cos = ProjectionHead(d, d)
        self.sem_head_mse = ProjectionHead(d, d)
        self._init_parameters(seed)

    def _init_parameters(self, seed: int):
        gen = torch.Generator().manual_seed(seed)
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                _trunc_normal_(module.weight, 0.02, gen)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, LayerNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    # ------------------------------------------------------------------
    # tensor paths

    def forward(self, levels: list[torch.Tensor]):
        """levels[i]: (B, C_i, H_i, W_i), finest first.

        Returns (recons, sem_cos, sem_mse, fused) where recons[i] matches
        levels[i] in shape and the semantic maps live at the finest level.
        """
        n = self.config.n_levels
        if len(levels) != n:
            raise ValueError(f"expected {n} feature levels, got {len(levels)}")
        for i, x in enumerate(levels):
            if x.shape[1] != self.config.channels[i]:
                raise ValueError(
                    f"level {i} expects {self.config.channels[i]} channels, got {x.shape[1]}"
                )
            if i and (levels[i - 1].shape[2] != 2 * x.shape[2] or levels[i - 1].shape[3] != 2 * x.shape[3]):
                raise ValueError("adjacent levels must differ by a factor of 2 in resolution")

        adapted = [self.adapters[i](levels[i]) for i in range(n)]
        accs = [None] * n
        acc = self.blocks[n - 1](adapted[n - 1])
        accs[n - 1] = acc
        for i in range(n - 2, -1, -1):
            acc = F.interpolate(acc, scale_factor=2, mode="bilinear", align_corners=False)
            acc = acc + self.upsample_convs[i](acc)
            acc = acc + adapted[i]
            acc = self.blocks[i](acc)
            accs[i] = acc
        recons = [self.recon_heads[i](accs[i]) for i in range(n)]
        fused = accs[0]
        return recons, self.sem_head_cos(fused), self.sem_head_mse(fused), fused

    # ------------------------------------------------------------------
    # raster paths

    def _to_tensors(self, feats: MultiScaleFeatures) -> list[torch.Tensor]:
        if tuple(feats.strides) != tuple(self.config.strides):
            raise ValueError(f"feature strides {feats.strides} != model strides {self.config.strides}")
        dtype = next(self.parameters()).dtype
        return [
            torch.from_numpy(np.ascontiguousarray(lv.values)).permute(2, 0, 1)[None].to(dtype)
            for lv in feats.levels
        ]

    def adapter_forward(self, level: int, x: Raster) -> Raster:
        t = torch.from_numpy(np.ascontiguousarray(x.values)).permute(2, 0, 1)[None].to(next(self.parameters()).dtype)
        with torch.no_grad():
            y = self.adapters[level](t)
        return Raster(y[0].permute(1, 2, 0).numpy().astype(np.float32))

    def fuse(self, adapted: MultiScaleFeatures) -> Raster:
        """Fuse already-adapted levels (all at d_sem channels) into one map
        at the finest resolution."""
        n = self.config.n_levels
        if len(adapted.levels) != n:
            raise ValueError(f"expected {n} levels, got {len(adapted.levels)}")
        dtype = next(self.parameters()).dtype
        tensors = [
            torch.from_numpy(np.ascontiguousarray(lv.values)).permute(2, 0, 1)[None].to(dtype)
            for lv in adapted.levels
        ]
        with torch.no_grad():
            acc = self.blocks[n - 1](tensors[n - 1])
            for i in range(n - 2, -1, -1):
                if tensors[i].shape[2] != 2 * acc.shape[2] or tensors[i].shape[3] != 2 * acc.shape[3]:
                    raise ValueError("inconsistent level shapes for fusion")
                acc = F.interpolate(acc, scale_factor=2, mode="bilinear", align_corners=False)
                acc = acc + self.upsample_convs[i](acc)
                acc = acc + tensors[i]
                acc = self.blocks[i](acc)
        return Raster(acc[0].permute(1, 2, 0).numpy().astype(np.float32))

    def forward_rasters(self, feats: MultiScaleFeatures):
        """Full forward pass on raster inputs.

        Returns (recons, sem_cos, sem_mse, fused) as Rasters.
        """
        tensors = self._to_tensors(feats)
        with torch.no_grad():
            recons, sem_cos, sem_mse, fused = self.forward(tensors)
        to_raster = lambda t: Raster(t[0].permute(1, 2, 0).numpy().astype(np.float32))
        return (
            tuple(to_raster(r) for r in recons),
            to_raster(sem_cos),
            to_raster(sem_mse),
            to_raster(fused),
        )

    def inference_embedding(self, feats: MultiScaleFeatures) -> Raster:
        """Cosine-head output upsampled to image resolution, unit-norm per
        pixel."""
        tensors = self._to_tensors(feats)
        size = feats.levels[0].height * self.config.strides[0]
        with torch.no_grad():
            _, sem_cos, _, _ = self.forward(tensors)
            up = F.interpolate(sem_cos, size=(size, size), mode="bilinear", align_corners=False)
            up = F.normalize(up, dim=1, eps=1e-12)
        return Raster(up[0].permute(1, 2, 0).numpy().astype(np.float32))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _trunc_normal_(tensor: torch.Tensor, std: float, gen: torch.Generator):
    # inverse-CDF sampling truncated at +/- 2 std
    lo, hi = -2.0, 2.0
    l = 0.5 * (1.0 + math.erf(lo / math.sqrt(2.0)))
    u = 0.5 * (1.0 + math.erf(hi / math.sqrt(2.0)))
    with torch.no_grad():
        tensor.uniform_(2 * l - 1, 2 * u - 1, generator=gen)
        tensor.erfinv_()
        tensor.mul_(std * math.sqrt(2.0))
        tensor.clamp_(lo * std, hi * std)
    return tensor


# ---------------------------------------------------------------------------
# checkpoint container: JSON manifest + named tensors in the raster layout


def save_checkpoint(path, model: AlignmentModel, step: int = 0, extra: dict | None = None) -> None:
    params = [(name, p.detach().to(torch.float32)) for name, p in model.named_parameters()]
    manifest = {
        "config": asdict(model.config),
        "seed": model.seed,
        "step": step,
        "params": [{"name": n, "shape": list(p.shape)} for n, p in params],
    }
    if extra:
        manifest["extra"] = extra
    blob = json.dumps(manifest, sort_keys=True).encode()
    out = bytearray()
    out += CHECKPOINT_MAGIC + struct.pack("<II", 1, len(blob)) + blob
    for _, p in params:
        flat = p.reshape(1, -1, 1).numpy()
        out += b"UVCD" + struct.pack("<III", 1, flat.shape[1], 1)
        out += np.ascontiguousarray(flat, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> tuple[AlignmentModel, dict]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not an alignment checkpoint")
    version, mlen = struct.unpack("<II", blob[4:12])
    if version != 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    manifest = json.loads(blob[12 : 12 + mlen].decode())
    cfg_dict = dict(manifest["config"])
    cfg_dict["strides"] = tuple(cfg_dict["strides"])
    cfg_dict["channels"] = tuple(cfg_dict["channels"])
    config = AlignmentConfig(**cfg_dict)
    model = AlignmentModel(config, seed=manifest.get("seed", 0))
    offset = 12 + mlen
    state = {}
    for entry in manifest["params"]:
        if blob[offset : offset + 4] != b"UVCD":
            raise ValueError("corrupt checkpoint: missing tensor header")
        _, numel, _ = struct.unpack("<III", blob[offset + 4 : offset + 16])
        offset += 16
        values = np.frombuffer(blob, dtype="<f4", count=numel, offset=offset)
        offset += 4 * numel
        state[entry["name"]] = torch.from_numpy(values.copy()).reshape(entry["shape"])
    model.load_state_dict(state)
    return model, manifest
