"""Frozen encoder abstractions and deterministic toy stand-ins.

Three encoder roles feed the pipeline: a hierarchical *spatial* encoder
(multi-scale, texture/boundary-rich features), a *semantic* image encoder
whose features live in the same space as a *text* encoder. Real
checkpoint-backed encoders plug in behind the same interfaces; the toy
implementations here are seed-reproducible, parameter-frozen networks that
are small enough to train against on a laptop CPU while still sharing an
image-text embedding space (palette-keyed, see ToySemanticImageEncoder).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
import torch
from torch import nn

from .core import DegenerateInputError, Raster, read_raster, write_raster

DEFAULT_PROMPT_TEMPLATES = (
    "a satellite photo of a {}.",
    "an aerial image of a {}.",
    "a remote sensing image of a {}.",
)

# reference colors shared by the toy semantic encoder and the synthetic
# scene generator; values are RGB in [0, 1]
TOY_PALETTE = {
    "architecture": (0.62, 0.36, 0.32),
    "road": (0.28, 0.28, 0.30),
    "vegetation": (0.22, 0.52, 0.24),
    "water": (0.18, 0.34, 0.66),
    "bare ground": (0.72, 0.62, 0.46),
}


@dataclass(frozen=True)
class SpatialEncoderConfig:
    input_size: int = 256
    strides: tuple[int, ...] = (4, 8, 16)
    channels: tuple[int, ...] = (32, 64, 128)

    def __post_init__(self):
        if len(self.strides) != len(self.channels):
            raise ValueError("strides and channels must have equal length")
        if any(s2 <= s1 for s1, s2 in zip(self.strides, self.strides[1:])):
            raise ValueError(f"strides must be strictly increasing, got {self.strides}")
        if any(c < 1 for c in self.channels):
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if any(self.input_size % s for s in self.strides):
            raise ValueError(f"strides {self.strides} must divide input_size {self.input_size}")

    @property
    def level_sizes(self) -> tuple[int, ...]:
        return tuple(self.input_size // s for s in self.strides)


@dataclass(frozen=True)
class MultiScaleFeatures:
    """Ordered multi-scale feature maps, finest (smallest stride) first."""

    levels: tuple[Raster, ...]
    strides: tuple[int, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.strides):
            raise ValueError("levels and strides must have equal length")


@dataclass(frozen=True)
class SemanticFeatureMap:
    """Dense semantic embeddings on a coarse grid (one cell per
    grid_stride x grid_stride pixel block)."""

    features: Raster
    grid_stride: int


@dataclass(frozen=True)
class TextEmbeddingSet:
    """One unit-norm embedding per category, category order preserved."""

    categories: tuple[str, ...]
    vectors: np.ndarray  # (K, d_sem)

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.categories):
            raise ValueError("need one embedding vector per category")
        norms = np.linalg.norm(vecs, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("text embeddings must be unit-norm")
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "vectors", vecs)

    @property
    def d_sem(self) -> int:
        return self.vectors.shape[1]

    def index_of(self, category: str) -> int:
        return self.categories.index(category)


@runtime_checkable
class SpatialEncoder(Protocol):
    config: SpatialEncoderConfig

    def encode(self, image: Raster) -> MultiScaleFeatures: ...

    def fingerprint(self) -> str: ...


@runtime_checkable
class SemanticImageEncoder(Protocol):
    d_sem: int
    patch_stride: int

    def encode_window(self, window: Raster) -> Raster: ...

    def fingerprint(self) -> str: ...


@runtime_checkable
class TextEncoder(Protocol):
    d_sem: int

    def encode(self, text: str) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# module-level operations


def encode_spatial(encoder: SpatialEncoder, image: Raster) -> MultiScaleFeatures:
    """Run the frozen spatial encoder; validates the input contract."""
    size = encoder.config.input_size
    if (image.height, image.width) != (size, size):
        raise ValueError(
            f"spatial encoder expects {size}x{size} input, got {image.height}x{image.width}"
        )
    if image.channels != 3:
        raise ValueError(f"spatial encoder expects 3 channels, got {image.channels}")
    return encoder.encode(image)


def sliding_window_encode(
    encoder: SemanticImageEncoder,
    image: Raster,
    window: int,
    overlap_ratio: float,
) -> SemanticFeatureMap:
    """Encode an image window by window and blend the overlapping feature
    grids with a separable raised-cosine profile (renormalized so the
    weights at every output cell sum to 1)."""
    p = encoder.patch_stride
    h, w = image.height, image.width
    if window > min(h, w):
        raise ValueError(f"window {window} larger than image {h}x{w}")
    if not 0.0 <= overlap_ratio < 1.0:
        raise ValueError(f"overlap_ratio must be in [0, 1), got {overlap_ratio}")
    if window % p or h % p or w % p:
        raise ValueError(f"image and window sizes must be multiples of patch stride {p}")

    step = window - int(window * overlap_ratio)
    step = max(p, (step // p) * p)
    starts_r = _axis_starts(h, window, step)
    starts_c = _axis_starts(w, window, step)

    n = window // p
    ramp = np.sin(np.pi * (np.arange(n) + 0.5) / n) ** 2
    tile_w = np.outer(ramp, ramp)[:, :, None]

    acc = np.zeros((h // p, w // p, encoder.d_sem), dtype=np.float64)
    wsum = np.zeros((h // p, w // p, 1), dtype=np.float64)
    for r0 in starts_r:
        for c0 in starts_c:
            crop = Raster(image.values[r0 : r0 + window, c0 : c0 + window])
            feats = encoder.encode_window(crop).values.astype(np.float64)
            gr, gc = r0 // p, c0 // p
            acc[gr : gr + n, gc : gc + n] += tile_w * feats
            wsum[gr : gr + n, gc : gc + n] += tile_w
    blended = (acc / wsum).astype(np.float32)
    return SemanticFeatureMap(Raster(blended), grid_stride=p)


def _axis_starts(size: int, window: int, step: int) -> list[int]:
    starts = list(range(0, max(size - window, 0) + 1, step))
    if starts[-1] != size - window:
        starts.append(size - window)
    return starts


def embed_text(
    encoder: TextEncoder,
    categories: list[str],
    templates: list[str] | tuple[str, ...] = DEFAULT_PROMPT_TEMPLATES,
) -> TextEmbeddingSet:
    """Embed every template instantiation per category, average and
    L2-normalize, preserving category order."""
    if not categories:
        raise ValueError("need at least one category")
    if not templates:
        raise ValueError("need at least one prompt template")
    vectors = []
    for name in categories:
        if not name or not name.strip():
            raise ValueError("empty category name")
        embs = np.stack([np.asarray(encoder.encode(t.format(name)), dtype=np.float64) for t in templates])
        mean = embs.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-9:
            raise DegenerateInputError(f"template embeddings for {name!r} cancel to zero")
        vectors.append(mean / norm)
    return TextEmbeddingSet(tuple(categories), np.stack(vectors))


# ---------------------------------------------------------------------------
# toy encoders


class ToySpatialEncoder(nn.Module):
    """Frozen random hierarchical conv net: per stage a strided downsample
    conv, a small 3x3 body, and a 1x1 projection to the configured channel
    count. All convolutions are bias-free so a zero image maps to zero
    features; tanh keeps feature magnitudes bounded."""

    def __init__(self, seed: int, config: SpatialEncoderConfig, body_convs: tuple[int, ...] | None = None):
        super().__init__()
        self.config = config
        self.seed = seed
        n = len(config.strides)
        if body_convs is None:
            body_convs = tuple(min(i + 1, 3) for i in range(n))
        gen = torch.Generator().manual_seed(seed)
        widths = [2 * c for c in config.channels]
        downs, bodies, projs = [], [], []
        prev_c, prev_stride = 3, 1
        for i in range(n):
            ratio = config.strides[i] // prev_stride
            if ratio * prev_stride != config.strides[i]:
                raise ValueError(f"stride {config.strides[i]} not a multiple of {prev_stride}")
            downs.append(self._conv(gen, prev_c, widths[i], ratio, stride=ratio))
            bodies.append(
                nn.Sequential(*[self._conv(gen, widths[i], widths[i], 3, padding=1) for _ in range(body_convs[i])])
            )
            projs.append(self._conv(gen, widths[i], config.channels[i], 1))
            prev_c, prev_stride = widths[i], config.strides[i]
        self.downs = nn.ModuleList(downs)
        self.bodies = nn.ModuleList(bodies)
        self.projs = nn.ModuleList(projs)
        self.requires_grad_(False)
        self.eval()

    @staticmethod
    def _conv(gen, c_in, c_out, k, stride=1, padding=0):
        conv = nn.Conv2d(c_in, c_out, k, stride=stride, padding=padding, bias=False)
        fan_in = c_in * k * k
        with torch.no_grad():
            conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
        return conv

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        outs = []
        for down, body, proj in zip(self.downs, self.bodies, self.projs):
            x = torch.nn.functional.gelu(down(x))
            for layer in body:
                x = torch.nn.functional.gelu(layer(x))
            outs.append(torch.tanh(proj(x)))
        return outs

    def encode(self, image: Raster) -> MultiScaleFeatures:
        x = torch.from_numpy(np.ascontiguousarray(image.values.astype(np.float32))).permute(2, 0, 1)[None]
        with torch.no_grad():
            outs = self.forward(x)
        levels = tuple(Raster(o[0].permute(1, 2, 0).numpy().copy()) for o in outs)
        return MultiScaleFeatures(levels, self.config.strides)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p.detach().numpy()).tobytes())
        return h.hexdigest()


class ToyTextEncoder:
    """Hash-to-sphere embedding: each lowercase token maps to a fixed
    random unit vector (seeded by token content); a string embeds to the
    mean of its token vectors."""

    def __init__(self, seed: int, d_sem: int):
        self.seed = seed
        self.d_sem = d_sem

    def token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        v = rng.standard_normal(self.d_sem)
        return v / np.linalg.norm(v)

    @staticmethod
    def tokenize(text: str) -> list[str]:
        cleaned = "".join(ch if ch.isalnum() else " " for ch in text.lower())
        return cleaned.split()

    def encode(self, text: str) -> np.ndarray:
        tokens = self.tokenize(text)
        if not tokens:
            raise ValueError(f"cannot embed text without tokens: {text!r}")
        return np.mean([self.token_vector(t) for t in tokens], axis=0)

    def phrase_anchor(self, phrase: str) -> np.ndarray:
        """Unit-norm embedding of a bare phrase (palette anchor)."""
        v = self.encode(phrase)
        return v / np.linalg.norm(v)

    def parameter_count(self) -> int:
        return 0

    def fingerprint(self) -> str:
        return hashlib.sha256(f"toy-text:{self.seed}:{self.d_sem}".encode()).hexdigest()


class ToySemanticImageEncoder:
    """Frozen random patch projection sharing an embedding space with the
    toy text encoder.

    Each patch embeds to a blend of (a) palette anchors weighted by how
    closely the mean patch color matches each palette reference color,
    (b) a random two-layer projection of its pixels, and (c) a
    hash-keyed direction that flips completely under any pixel change.
    The anchor term gives the toy image/text pair a common semantic
    space, the way a contrastively trained encoder pair behaves; the
    hash term models the semantic noise of an imperfect encoder: it is
    deterministic yet unpredictable from smooth image structure, so raw
    semantic features carry it while an alignment module trained against
    many patches averages it away.
    """

    def __init__(
        self,
        seed: int,
        d_sem: int,
        text_encoder: ToyTextEncoder,
        patch_stride: int = 16,
        hidden: int = 1024,
        palette: dict[str, tuple[float, float, float]] | None = None,
        detail_mix: float = 0.15,
        noise_mix: float = 0.35,
        color_tau: float = 0.02,
    ):
        self.seed = seed
        self.d_sem = d_sem
        self.patch_stride = patch_stride
        self.detail_mix = detail_mix
        self.noise_mix = noise_mix
        self.color_tau = color_tau
        rng = np.random.default_rng(seed)
        n_in = patch_stride * patch_stride * 3
        self.w1 = rng.standard_normal((n_in, hidden)).astype(np.float32) / np.sqrt(n_in)
        self.b1 = (0.1 * rng.standard_normal(hidden)).astype(np.float32)
        self.w2 = rng.standard_normal((hidden, d_sem)).astype(np.float32) / np.sqrt(hidden)
        self.b2 = (0.1 * rng.standard_normal(d_sem)).astype(np.float32)
        palette = TOY_PALETTE if palette is None else palette
        self.palette_names = tuple(palette.keys())
        self.palette_colors = np.array([palette[k] for k in self.palette_names], dtype=np.float32)
        self.palette_anchors = np.stack(
            [text_encoder.phrase_anchor(name) for name in self.palette_names]
        ).astype(np.float32)

    def _patch_noise(self, flat: np.ndarray) -> np.ndarray:
        salt = f"sem-noise:{self.seed}".encode()
        out = np.empty((flat.shape[0], self.d_sem), dtype=np.float32)
        nbytes = 4 * self.d_sem
        for i in range(flat.shape[0]):
            digest = hashlib.shake_256(salt + flat[i].tobytes()).digest(nbytes)
            u = np.frombuffer(digest, dtype="<u4").astype(np.float32) / 2**32 - 0.5
            out[i] = u / (np.linalg.norm(u) + 1e-12)
        return out

    def encode_window(self, window: Raster) -> Raster:
        p = self.patch_stride
        h, w = window.height, window.width
        if h % p or w % p:
            raise ValueError(f"window {h}x{w} not divisible by patch stride {p}")
        v = window.values.astype(np.float32)
        patches = v.reshape(h // p, p, w // p, p, 3).transpose(0, 2, 1, 3, 4)
        flat = np.ascontiguousarray(patches.reshape(-1, p * p * 3))

        detail = np.tanh(flat @ self.w1 + self.b1) @ self.w2 + self.b2
        detail /= np.linalg.norm(detail, axis=1, keepdims=True) + 1e-12

        mean_rgb = flat.reshape(-1, p * p, 3).mean(axis=1)
        d2 = ((mean_rgb[:, None, :] - self.palette_colors[None]) ** 2).sum(axis=2)
        logits = -d2 / self.color_tau
        logits -= logits.max(axis=1, keepdims=True)
        kappa = np.exp(logits)
        kappa /= kappa.sum(axis=1, keepdims=True)
        prior = kappa @ self.palette_anchors

        out = prior + self.detail_mix * detail + self.noise_mix * self._patch_noise(flat)
        out /= np.linalg.norm(out, axis=1, keepdims=True) + 1e-12
        return Raster(out.reshape(h // p, w // p, self.d_sem).astype(np.float32))

    def parameter_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.w1, self.b1, self.w2, self.b2, self.palette_colors, self.palette_anchors):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(
            f"{self.patch_stride}:{self.detail_mix}:{self.noise_mix}:{self.color_tau}".encode()
        )
        return h.hexdigest()


def make_toy_encoders(
    seed: int,
    config: SpatialEncoderConfig | None = None,
    d_sem: int = 32,
) -> tuple[ToySpatialEncoder, ToySemanticImageEncoder, ToyTextEncoder]:
    """Build the seed-reproducible frozen encoder triple."""
    config = config or SpatialEncoderConfig()
    spatial = ToySpatialEncoder(seed, config)
    text = ToyTextEncoder(seed + 2, d_sem)
    semantic = ToySemanticImageEncoder(seed + 1, d_sem, text)
    return spatial, semantic, text


@dataclass
class EncoderBundle:
    """The frozen encoder triple plus the sliding-window extraction
    settings used wherever semantic features are computed."""

    spatial: SpatialEncoder
    semantic: SemanticImageEncoder
    text: TextEncoder
    window: int = 128
    overlap: float = 0.5
    cache: "FeatureCache | None" = None

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.spatial.fingerprint().encode())
        h.update(self.semantic.fingerprint().encode())
        h.update(f"{self.window}:{self.overlap}".encode())
        return h.hexdigest()

    def parameter_count(self) -> int:
        total = self.spatial.parameter_count() + self.semantic.parameter_count()
        if hasattr(self.text, "parameter_count"):
            total += self.text.parameter_count()
        return total


# ---------------------------------------------------------------------------
# feature cache


def content_id(image: Raster) -> str:
    """Stable id for an image based on its bytes."""
    return hashlib.sha256(np.ascontiguousarray(image.values).tobytes()).hexdigest()[:16]


class FeatureCache:
    """Directory cache of frozen encoder outputs.

    Layout: `<image-id>.spatial.<level>.uvcd`, `<image-id>.semantic.uvcd`
    and a `manifest.txt` with one `id  fingerprint  window  overlap` line
    per cached image. Entries whose manifest line does not match the
    current bundle are treated as misses.
    """

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.dir / "manifest.txt"
        self._entries = {}
        if self.manifest_path.exists():
            for line in self.manifest_path.read_text().splitlines():
                parts = line.split("\t")
                if len(parts) == 4:
                    self._entries[parts[0]] = (parts[1], parts[2], parts[3])

    def _key(self, bundle: EncoderBundle) -> tuple[str, str, str]:
        return (bundle.fingerprint(), str(bundle.window), str(bundle.overlap))

    def get(self, image_id: str, bundle: EncoderBundle, n_levels: int):
        if self._entries.get(image_id) != self._key(bundle):
            return None
        try:
            levels = [read_raster(self.dir / f"{image_id}.spatial.{i}.uvcd") for i in range(n_levels)]
            semantic = read_raster(self.dir / f"{image_id}.semantic.uvcd")
        except (FileNotFoundError, ValueError):
            return None
        return levels, semantic

    def put(self, image_id: str, bundle: EncoderBundle, levels, semantic: Raster) -> None:
        for i, level in enumerate(levels):
            write_raster(self.dir / f"{image_id}.spatial.{i}.uvcd", level)
        write_raster(self.dir / f"{image_id}.semantic.uvcd", semantic)
        self._entries[image_id] = self._key(bundle)
        lines = [f"{k}\t{v[0]}\t{v[1]}\t{v[2]}" for k, v in sorted(self._entries.items())]
        self.manifest_path.write_text("\n".join(lines) + "\n")
