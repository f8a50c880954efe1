"""Command-line frontend: train / detect / postprocess / evaluate /
baseline / export-viz, driven by a single JSON config file with per-stage
sections (flags override file values where noted).

Exit status taxonomy: 2 config problems, 3 data problems, 4 model /
checkpoint problems, 5 refiner problems.

Each stage writes a `<stage>.manifest.json` recording the config
snapshot, input fingerprints and outputs; re-running a stage whose
manifest matches the current inputs skips it.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import AlignmentConfig, AlignmentModel, load_checkpoint
from .core import (
    BinaryMask,
    Raster,
    read_image_png,
    read_mask_png,
    read_raster,
    write_image_png,
    write_mask_png,
)
from .encoders import (
    DEFAULT_PROMPT_TEMPLATES,
    EncoderBundle,
    FeatureCache,
    SpatialEncoderConfig,
    TextEmbeddingSet,
    embed_text,
    make_toy_encoders,
)
from .evaluation import DatasetLayout, evaluate_dataset
from .inference import (
    ClassScoreMap,
    DetectSettings,
    change_likelihood,
    save_likelihood,
    score_image,
)
from .losses import LossWeights
from .postproc import (
    EchoRefiner,
    binarize_and_clean,
    draw_box_overlay,
    refine_components_detailed,
    write_component_table,
)
from .training import TrainConfig, train
from . import baseline as baseline_mod

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_REFINER = 5

DEFAULT_CATEGORIES = ("architecture", "road", "vegetation", "water", "bare ground")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class EncoderSection:
    kind: str = "toy"
    seed: int = 7
    input_size: int = 256
    strides: tuple[int, ...] = (4, 8, 16)
    channels: tuple[int, ...] = (32, 64, 128)
    d_sem: int = 32
    window: int = 128
    overlap: float = 0.5
    checkpoint_spatial: str = ""
    checkpoint_semantic: str = ""
    checkpoint_text: str = ""


@dataclass(frozen=True)
class AlignmentSection:
    adapter_hidden: int = 0  # 0 -> d_sem
    blocks_per_level: int = 1
    expand: int = 4


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 3
    epochs: int = 30
    seed: int = 0
    lambda_recon: tuple[float, ...] = (0.01, 0.01, 0.01)
    lambda_cos: float = 1.0
    lambda_mse: float = 1.0


@dataclass(frozen=True)
class DetectSection:
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    target: str = "architecture"
    mode: str = "softmax"
    temperature: float = 100.0
    tile: int = 256
    overlap: float = 0.5
    templates: tuple[str, ...] = DEFAULT_PROMPT_TEMPLATES


@dataclass(frozen=True)
class PostprocSection:
    opening_radius: int = 1
    min_area_fraction: float = 0.0005
    iou_min: float = 0.3
    refiner: str = "none"
    strict: bool = False
    refine_categories: tuple[str, ...] = ()  # empty -> detect.target only


@dataclass(frozen=True)
class EvalSection:
    root: str = ""
    epoch_a: str = "A"
    epoch_b: str = "B"
    labels: tuple[str, ...] = ("label",)
    semantics: str = "binary"
    categories: tuple[str, ...] = ()
    mode: str = "aggregate"


@dataclass(frozen=True)
class AblationSection:
    no_alignment: bool = False
    no_recon: bool = False


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderSection = EncoderSection()
    alignment: AlignmentSection = AlignmentSection()
    train: TrainSection = TrainSection()
    detect: DetectSection = DetectSection()
    postproc: PostprocSection = PostprocSection()
    eval: EvalSection = EvalSection()
    ablations: AblationSection = AblationSection()


_SECTION_TYPES = {
    "encoder": EncoderSection,
    "alignment": AlignmentSection,
    "train": TrainSection,
    "detect": DetectSection,
    "postproc": PostprocSection,
    "eval": EvalSection,
    "ablations": AblationSection,
}


def _build_section(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise CliError(EXIT_CONFIG, f"unknown config keys under {path!r}: {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad config section {path!r}: {exc}") from exc


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise CliError(EXIT_CONFIG, "config root must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTION_TYPES))
    if unknown:
        raise CliError(EXIT_CONFIG, f"unknown config sections: {', '.join(unknown)}")
    sections = {
        name: _build_section(cls, doc.get(name, {}), name)
        for name, cls in _SECTION_TYPES.items()
    }
    return RunConfig(**sections)


def config_to_dict(cfg: RunConfig) -> dict:
    def unfold(obj):
        if dataclasses.is_dataclass(obj):
            return {k: unfold(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return [unfold(v) for v in obj]
        return obj

    return {name: unfold(getattr(cfg, name)) for name in _SECTION_TYPES}


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise CliError(EXIT_CONFIG, f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


# ---------------------------------------------------------------------------
# shared plumbing


def build_bundle(cfg: RunConfig, cache_dir=None) -> EncoderBundle:
    enc = cfg.encoder
    if enc.kind != "toy":
        raise CliError(
            EXIT_MODEL,
            f"encoder kind {enc.kind!r} requires external checkpoints that are not bundled",
        )
    spatial, semantic, text = make_toy_encoders(
        enc.seed,
        SpatialEncoderConfig(enc.input_size, enc.strides, enc.channels),
        enc.d_sem,
    )
    cache = FeatureCache(cache_dir) if cache_dir else None
    return EncoderBundle(spatial, semantic, text, enc.window, enc.overlap, cache=cache)


def build_text_embeddings(cfg: RunConfig, bundle: EncoderBundle) -> TextEmbeddingSet:
    return embed_text(bundle.text, list(cfg.detect.categories), cfg.detect.templates)


def alignment_config(cfg: RunConfig) -> AlignmentConfig:
    hidden = cfg.alignment.adapter_hidden or cfg.encoder.d_sem
    return AlignmentConfig(
        strides=cfg.encoder.strides,
        channels=cfg.encoder.channels,
        d_sem=cfg.encoder.d_sem,
        adapter_hidden=hidden,
        blocks_per_level=cfg.alignment.blocks_per_level,
        expand=cfg.alignment.expand,
    )


def detect_settings(cfg: RunConfig) -> DetectSettings:
    d = cfg.detect
    return DetectSettings(mode=d.mode, temperature=d.temperature, tile=d.tile, tile_overlap=d.overlap)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fingerprints(paths: list[Path]) -> dict[str, str]:
    return {str(p): _sha256(p) for p in sorted(paths)}


def _manifest_path(out_dir: Path, stage: str) -> Path:
    return out_dir / f"{stage}.manifest.json"


def _stage_up_to_date(out_dir: Path, stage: str, inputs: dict, config_doc: dict) -> bool:
    path = _manifest_path(out_dir, stage)
    if not path.exists():
        return False
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError:
        return False
    if doc.get("inputs") != inputs or doc.get("config") != config_doc:
        return False
    return all(Path(p).exists() for p in doc.get("outputs", []))


def _write_manifest(out_dir: Path, stage: str, inputs: dict, outputs: list, config_doc: dict, elapsed: float):
    doc = {
        "stage": stage,
        "tool_version": __version__,
        "config": config_doc,
        "inputs": inputs,
        "outputs": [str(o) for o in outputs],
        "elapsed_seconds": round(elapsed, 3),
    }
    path = _manifest_path(out_dir, stage)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
    os.replace(tmp, path)


def _load_images(directory: Path) -> list[Raster]:
    files = sorted(directory.glob("*.png"))
    return [read_image_png(p) for p in files]


def _cache_dir(out_dir: Path) -> Path:
    env = os.environ.get("UVCD_CACHE_DIR")
    return Path(env) if env else out_dir / "cache"


def _safe(name: str) -> str:
    return name.replace(" ", "_")


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise CliError(EXIT_DATA, f"dataset directory not found: {data_dir}")
    image_paths = sorted(data_dir.glob("*.png"))
    if not image_paths:
        raise CliError(EXIT_DATA, f"no training images under {data_dir}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    config_doc = config_to_dict(cfg)
    inputs = _fingerprints(image_paths + [Path(args.config)])
    if _stage_up_to_date(out_dir, "train", inputs, config_doc):
        print(f"train: up to date in {out_dir}")
        return 0

    start = time.perf_counter()
    bundle = build_bundle(cfg, cache_dir=_cache_dir(out_dir))
    t = cfg.train
    n_levels = len(cfg.encoder.strides)
    lambda_recon = t.lambda_recon
    if len(lambda_recon) != n_levels:
        raise CliError(EXIT_CONFIG, f"lambda_recon needs {n_levels} entries, got {len(lambda_recon)}")
    train_cfg = TrainConfig(
        learning_rate=t.learning_rate,
        weight_decay=t.weight_decay,
        batch_size=t.batch_size,
        epochs=t.epochs,
        seed=t.seed,
        weights=LossWeights(lambda_recon, t.lambda_cos, t.lambda_mse),
        ablation_no_recon=cfg.ablations.no_recon,
    )
    images = [read_image_png(p) for p in image_paths]
    model = AlignmentModel(alignment_config(cfg), seed=t.seed)
    state = train(images, bundle, train_cfg, model=model, out_dir=out_dir)
    outputs = [out_dir / "alignment.ckpt", out_dir / "train_log.jsonl"]
    _write_manifest(out_dir, "train", inputs, outputs, config_doc, time.perf_counter() - start)
    print(f"train: {state.step} steps, final total loss {state.log[-1].total:.6f}")
    return 0


def _load_pair(args) -> tuple[Raster, Raster, str]:
    path_a, path_b = Path(args.image_a), Path(args.image_b)
    for p in (path_a, path_b):
        if not p.exists():
            raise CliError(EXIT_DATA, f"image not found: {p}")
    pair_id = getattr(args, "pair_id", None) or f"{path_a.stem}__{path_b.stem}"
    return read_image_png(path_a), read_image_png(path_b), pair_id


def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    image_a, image_b, pair_id = _load_pair(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = None
    input_paths = [Path(args.config), Path(args.image_a), Path(args.image_b)]
    if not cfg.ablations.no_alignment:
        if not args.checkpoint:
            raise CliError(EXIT_MODEL, "detect requires --checkpoint unless ablations.no_alignment is set")
        ckpt = Path(args.checkpoint)
        if not ckpt.exists():
            raise CliError(EXIT_MODEL, f"checkpoint not found: {ckpt}")
        input_paths.append(ckpt)

    config_doc = config_to_dict(cfg)
    inputs = _fingerprints(input_paths)
    if _stage_up_to_date(out_dir, f"detect.{pair_id}", inputs, config_doc):
        print(f"detect: {pair_id} up to date in {out_dir}")
        return 0

    start = time.perf_counter()
    if not cfg.ablations.no_alignment:
        model, _ = load_checkpoint(Path(args.checkpoint))
    bundle = build_bundle(cfg)
    text = build_text_embeddings(cfg, bundle)
    settings = detect_settings(cfg)

    s1 = score_image(image_a, model, bundle, text, settings)
    s2 = score_image(image_b, model, bundle, text, settings)
    clm = change_likelihood(s1, s2)

    outputs = save_likelihood(out_dir, pair_id, clm)
    from .core import write_raster

    for tag, smap in (("a", s1), ("b", s2)):
        spath = out_dir / f"{pair_id}.scores_{tag}.uvcd"
        write_raster(spath, smap.scores)
        outputs.append(str(spath))
    _write_manifest(out_dir, f"detect.{pair_id}", inputs, outputs, config_doc, time.perf_counter() - start)
    print(f"detect: wrote {len(outputs)} artifacts for {pair_id}")
    return 0


def cmd_postprocess(args) -> int:
    cfg = load_config(args.config)
    like_path = Path(args.likelihood)
    if not like_path.exists():
        raise CliError(EXIT_DATA, f"likelihood container not found: {like_path}")
    image_a, image_b, _ = _load_pair(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pair_id = like_path.name.replace(".likelihood.uvcd", "")

    categories = list(cfg.detect.categories)
    likelihood = read_raster(like_path)
    if likelihood.channels != len(categories):
        raise CliError(
            EXIT_DATA,
            f"likelihood has {likelihood.channels} channels but config lists {len(categories)} categories",
        )

    refine_set = set(cfg.postproc.refine_categories or (cfg.detect.target,))
    use_refiner = cfg.postproc.refiner != "none"
    if use_refiner and cfg.postproc.refiner not in ("echo",):
        raise CliError(EXIT_REFINER, f"refiner {cfg.postproc.refiner!r} is not available")

    scores = None
    if use_refiner:
        sa = like_path.with_name(f"{pair_id}.scores_a.uvcd")
        sb = like_path.with_name(f"{pair_id}.scores_b.uvcd")
        if not sa.exists() or not sb.exists():
            raise CliError(EXIT_REFINER, "refiner needs the score containers written by detect")
        mode = cfg.detect.mode
        scores = (
            ClassScoreMap(read_raster(sa), tuple(categories), mode),
            ClassScoreMap(read_raster(sb), tuple(categories), mode),
        )

    config_doc = config_to_dict(cfg)
    inputs = _fingerprints([Path(args.config), like_path, Path(args.image_a), Path(args.image_b)])
    if _stage_up_to_date(out_dir, f"postprocess.{pair_id}", inputs, config_doc):
        print(f"postprocess: {pair_id} up to date in {out_dir}")
        return 0

    start = time.perf_counter()
    outputs = []
    strict = args.strict or cfg.postproc.strict
    for k, category in enumerate(categories):
        cands = binarize_and_clean(
            likelihood.channel(k),
            min_area_fraction=cfg.postproc.min_area_fraction,
            opening_radius=cfg.postproc.opening_radius,
        )
        statuses = [(c, "candidate") for c in cands.components]
        if use_refiner and category in refine_set and len(cands):
            refiner = EchoRefiner(cands)
            mask, statuses = refine_components_detailed(
                cands,
                (image_a, image_b),
                scores,
                k,
                refiner,
                iou_min=cfg.postproc.iou_min,
                strict=strict,
            )
        else:
            mask = cands.union_mask()
        safe = _safe(category)
        mask_path = out_dir / f"{pair_id}.{safe}.png"
        write_mask_png(mask_path, mask)
        table_path = out_dir / f"{pair_id}.{safe}.components.txt"
        write_component_table(table_path, statuses)
        overlay_path = out_dir / f"{pair_id}.{safe}.overlay.png"
        write_image_png(overlay_path, draw_box_overlay(image_a, cands))
        outputs += [mask_path, table_path, overlay_path]
    _write_manifest(out_dir, f"postprocess.{pair_id}", inputs, outputs, config_doc, time.perf_counter() - start)
    print(f"postprocess: wrote {len(outputs)} artifacts for {pair_id}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    ev = cfg.eval
    root = args.data_root or ev.root
    if not root or not Path(root).is_dir():
        raise CliError(EXIT_DATA, f"dataset root not found: {root!r}")
    layout = DatasetLayout(
        root=root,
        epoch_a=ev.epoch_a,
        epoch_b=ev.epoch_b,
        labels=ev.labels,
        semantics=ev.semantics,
        categories=ev.categories,
    )
    start = time.perf_counter()
    try:
        report = evaluate_dataset(args.pred, layout, mode=ev.mode)
    except (ValueError, OSError) as exc:
        raise CliError(EXIT_DATA, f"evaluation failed: {exc}") from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [out_dir / "report.json", out_dir / "report.txt"]
    (out_dir / "report.json").write_text(report.to_json_text() + "\n")
    (out_dir / "report.txt").write_text(report.to_table() + "\n")
    inputs = _fingerprints([Path(args.config)])
    _write_manifest(out_dir, "evaluate", inputs, outputs, config_to_dict(cfg), time.perf_counter() - start)
    print(report.to_table())
    if report.missing:
        print(f"evaluate: {len(report.missing)} predictions missing", file=sys.stderr)
        return EXIT_DATA
    return 0


def cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    start = time.perf_counter()
    for d in (args.masks_a, args.masks_b):
        if not Path(d).is_dir():
            raise CliError(EXIT_DATA, f"mask directory not found: {d}")
    shape = None
    if args.shape:
        try:
            h, w = (int(v) for v in args.shape.split("x"))
            shape = (h, w)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, f"bad --shape {args.shape!r}, expected HxW") from exc
    m1 = baseline_mod.load_mask_set(args.masks_a, shape=shape)
    m2 = baseline_mod.load_mask_set(args.masks_b, shape=shape)
    m1 = baseline_mod.filter_by_confidence(m1, args.confidence)
    m2 = baseline_mod.filter_by_confidence(m2, args.confidence)
    if m1.shape is None and m2.shape is None:
        raise CliError(EXIT_DATA, "no masks survive filtering and no --shape given")
    result = baseline_mod.match_masks(m1, m2, args.theta)
    mask = baseline_mod.change_map(m1, m2, result)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "baseline_change.png"
    write_mask_png(out_path, mask)
    summary = {
        "pairs": [[i, j, iou] for i, j, iou in result.pairs],
        "unmatched_a": list(result.unmatched1),
        "unmatched_b": list(result.unmatched2),
        "confidence": args.confidence,
        "theta": args.theta,
    }
    (out_dir / "baseline_matches.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    inputs = _fingerprints(
        [Path(args.config)]
        + sorted(Path(args.masks_a).glob("*.png"))
        + sorted(Path(args.masks_b).glob("*.png"))
    )
    _write_manifest(
        out_dir,
        "baseline",
        inputs,
        [out_path, out_dir / "baseline_matches.json"],
        config_to_dict(cfg),
        time.perf_counter() - start,
    )
    print(
        f"baseline: {len(result.pairs)} matched, "
        f"{len(result.unmatched1)}+{len(result.unmatched2)} unmatched"
    )
    return 0


VIZ_PALETTE = {
    "tp": (1.0, 1.0, 1.0),  # white
    "tn": (0.0, 0.0, 0.0),  # black
    "fp": (1.0, 0.0, 0.0),  # red
    "fn": (0.0, 1.0, 1.0),  # cyan
}


def comparison_overlay(pred: BinaryMask, gt: BinaryMask) -> Raster:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = pred.values.astype(bool)
    g = gt.values.astype(bool)
    out = np.zeros((*pred.shape, 3), dtype=np.float32)
    out[p & g] = VIZ_PALETTE["tp"]
    out[~p & ~g] = VIZ_PALETTE["tn"]
    out[p & ~g] = VIZ_PALETTE["fp"]
    out[~p & g] = VIZ_PALETTE["fn"]
    return Raster(out)


def cmd_export_viz(args) -> int:
    for p in (args.pred, args.gt):
        if not Path(p).exists():
            raise CliError(EXIT_DATA, f"mask not found: {p}")
    overlay = comparison_overlay(read_mask_png(args.pred), read_mask_png(args.gt))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_image_png(out, overlay)
    print(f"export-viz: wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvcd",
        description="Unsupervised open-vocabulary change detection pipeline",
    )
    parser.add_argument("--version", action="version", version=f"uvcd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the alignment module on unpaired images")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="directory of training PNGs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="compute the change-likelihood map for an image pair")
    p.add_argument("--config", required=True)
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    p.add_argument("--checkpoint", default="")
    p.add_argument("--pair-id", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("postprocess", help="binarize, clean and refine a likelihood map")
    p.add_argument("--config", required=True)
    p.add_argument("--likelihood", required=True)
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    p.add_argument("--strict", action="store_true", help="drop (instead of keep) rejected refinements")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("evaluate", help="score predicted masks against dataset labels")
    p.add_argument("--config", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--data-root", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="mask-matching change detection from mask directories")
    p.add_argument("--config", required=True)
    p.add_argument("--masks-a", required=True)
    p.add_argument("--masks-b", required=True)
    p.add_argument("--confidence", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--shape", default="", help="HxW fallback when mask sets may be empty")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("export-viz", help="white/black/red/cyan TP/TN/FP/FN overlay")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_viz)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"uvcd: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
