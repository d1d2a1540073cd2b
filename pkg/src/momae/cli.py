"""Command-line entry point: analyze, mask, pretrain, finetune, eval, gradcheck.

Exit status: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
All outputs are deterministic functions of the arguments and input files.
The environment variable MOMAE_THREADS caps internal parallelism (default:
machine parallelism).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import diagnostics
from .dataio import (
    load_checkpoint,
    load_container,
    load_pgm_ppm,
    save_checkpoint,
    save_pgm_ppm,
    write_heatmap,
)
from .errors import (
    CheckpointCorruptError,
    CheckpointIncompatibleError,
    DataError,
    DegenerateInputError,
    FormatError,
    InvalidArgumentError,
    MomaeError,
    TrainingDivergedError,
)
from .mae import ViTConfig
from .masker import invert_plan, plan_to_text, random_mask, score_patches, select_visible
from .mfcore import estimate_tau
from .patching import ImageBuffer, partition_patches, to_luminance
from .pipeline import (
    FINETUNE_DEFAULTS,
    PRETRAIN_DEFAULTS,
    TrainConfig,
    evaluate,
    export_confusion,
    export_pr_curve,
    finetune,
    metrics_to_json,
    model_from_checkpoint,
    pretrain,
)

TAU_SCALES = (1, 2, 4, 8, 16)

TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
VIT_KEYS = {
    "patch_size",
    "encoder_dim",
    "decoder_dim",
    "encoder_layers",
    "decoder_layers",
    "heads",
    "mlp_ratio",
}
EXTRA_KEYS = {"q_sweep"}


def load_run_config(path: str | None) -> dict:
    """Flat JSON config; unknown keys are rejected."""
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"--config {path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"--config {path}: top level must be a JSON object")
    allowed = TRAIN_KEYS | VIT_KEYS | EXTRA_KEYS
    for key in doc:
        if key not in allowed:
            raise InvalidArgumentError(f"--config {path}: unknown key {key!r}")
    if "q_sweep" in doc and not isinstance(doc["q_sweep"], list):
        raise InvalidArgumentError(f"--config {path}: q_sweep must be a list of orders")
    return doc


def _train_config(stage: str, file_cfg: dict, args: argparse.Namespace) -> TrainConfig:
    values = dict(PRETRAIN_DEFAULTS if stage == "pretrain" else FINETUNE_DEFAULTS)
    values.update({k: v for k, v in file_cfg.items() if k in TRAIN_KEYS and k != "stage"})
    overrides = {
        "epochs": args.epochs,
        "base_lr": args.lr,
        "weight_decay": args.weight_decay,
        "batch_size": args.batch_size,
        "mask_ratio": args.ratio,
        "q": args.q,
        "s": args.s,
        "policy": args.policy,
        "seed": args.seed,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "normalize_targets", False):
        values["normalize_targets"] = True
    return TrainConfig(stage=stage, **values)


def _vit_config(file_cfg: dict, container, args: argparse.Namespace) -> ViTConfig:
    h, w, c = container.shape_hwc
    values = {k: v for k, v in file_cfg.items() if k in VIT_KEYS}
    if getattr(args, "patch_size", None) is not None:
        values["patch_size"] = args.patch_size
    return ViTConfig(image_height=h, image_width=w, channels=c, **values)


def _load_image(path: str) -> ImageBuffer:
    return load_pgm_ppm(path)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_analyze(args: argparse.Namespace) -> int:
    image = to_luminance(_load_image(args.image))
    if args.patch_size > min(image.height, image.width):
        raise InvalidArgumentError(
            f"--patch-size {args.patch_size} exceeds image extent {image.height}x{image.width}"
        )
    grid = partition_patches(image, args.patch_size)
    scores = score_patches(image, grid, args.q, args.s)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["index,row,col,entropy"]
    for k in range(grid.n_patches):
        lines.append(f"{k},{k // grid.cols},{k % grid.cols},{_fmt(scores.scores[k])}")
    (out / "entropies.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_heatmap(scores.scores.reshape(grid.rows, grid.cols), out / "entropy_heatmap.pgm")
    if abs(args.q - 1.0) <= 1e-9:
        print("tau(q): undefined at q=1 (partition function is identically 1)")
    else:
        tau = estimate_tau(image.data.ravel(), TAU_SCALES, args.q, image.levels)
        print(
            f"tau(q={_fmt(args.q)}) over scales {list(TAU_SCALES)}: "
            f"tau={_fmt(tau.tau)} r_squared={_fmt(tau.r_squared)}"
        )
    print(f"wrote {out / 'entropies.csv'} and {out / 'entropy_heatmap.pgm'}")
    return 0


def cmd_mask(args: argparse.Namespace) -> int:
    if not 0.0 <= args.ratio <= 1.0:
        raise InvalidArgumentError(f"--ratio must lie in [0, 1], got {args.ratio}")
    image = to_luminance(_load_image(args.image))
    grid = partition_patches(image, args.patch_size)
    if args.policy == "random":
        plan = random_mask(grid.n_patches, args.ratio, args.seed if args.seed is not None else 0)
    else:
        plan = select_visible(score_patches(image, grid, args.q, args.s), args.ratio)
        if args.policy == "inverted":
            plan = invert_plan(plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    (out / f"{stem}.plan.txt").write_text(plan_to_text(plan), encoding="utf-8")
    dimmed = image.data.copy()
    for k in plan.masked:
        r0, c0 = grid.origin(k)
        n = grid.patch_size
        block = dimmed[r0 : r0 + n, c0 : c0 + n, :].astype(np.float64)
        dimmed[r0 : r0 + n, c0 : c0 + n, :] = np.floor(block * 0.25 + 0.5).astype(np.uint8)
    save_pgm_ppm(ImageBuffer(data=dimmed, levels=image.levels), out / f"{stem}.masked.pgm")
    print(
        f"plan: {len(plan.visible)} visible / {len(plan.masked)} masked "
        f"({plan.policy}, ratio {_fmt(plan.ratio)})"
    )
    print(f"wrote {out / f'{stem}.plan.txt'} and {out / f'{stem}.masked.pgm'}")
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    file_cfg = load_run_config(args.config)
    dataset = load_container(args.data)
    config = _train_config("pretrain", file_cfg, args)
    vit = _vit_config(file_cfg, dataset, args)
    checkpoint = pretrain(dataset, config, vit, log=sys.stdout)
    save_checkpoint(checkpoint.arrays, checkpoint.metadata, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    file_cfg = load_run_config(args.config)
    checkpoint = load_checkpoint(args.ckpt)
    dataset = load_container(args.data)
    config = _train_config("finetune", file_cfg, args)
    tuned = finetune(checkpoint, dataset, config, log=sys.stdout)
    save_checkpoint(tuned.arrays, tuned.metadata, args.out)
    if args.val is not None:
        metrics = evaluate(model_from_checkpoint(tuned), load_container(args.val))
        print(f"val accuracy={_fmt(metrics.accuracy)} f1={_fmt(metrics.f1)}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    dataset = load_container(args.data)
    metrics = evaluate(model_from_checkpoint(checkpoint), dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(metrics_to_json(metrics), encoding="utf-8")
    export_pr_curve(metrics, out / "pr_curve.csv")
    export_confusion(metrics, out / "confusion.csv")
    print(
        f"accuracy={_fmt(metrics.accuracy)} f1={_fmt(metrics.f1)} "
        f"pr_auc={_fmt(metrics.pr_auc)} roc_auc={_fmt(metrics.roc_auc)}"
    )
    print(f"wrote metrics.json, pr_curve.csv, confusion.csv under {out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = diagnostics.run_suite(include_composite=not args.ops_only)
    failed = False
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{result.name}: max_rel_err={result.error:.3e} bound={diagnostics.GRADCHECK_BOUND} {status}")
        failed |= not result.passed
    if failed:
        print("gradient check FAILED", file=sys.stderr)
        return 3
    print("all gradient checks passed")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_entropy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=float, default=2.0, help="Renyi order (default 2, the compromise order)")
    p.add_argument("--s", type=int, default=8, help="intensity bin spacing (default 8: 31 bins over 255 levels)")
    p.add_argument("--patch-size", type=int, default=16, dest="patch_size", help="patch side in pixels (default 16)")


def _add_train_flags(p: argparse.ArgumentParser, stage: str) -> None:
    d = PRETRAIN_DEFAULTS if stage == "pretrain" else FINETUNE_DEFAULTS
    p.add_argument("--config", default=None, help="flat JSON config file; flags override its values")
    p.add_argument("--epochs", type=int, default=None, help=f"training epochs (default {d['epochs']})")
    p.add_argument("--lr", type=float, default=None, help=f"base learning rate (default {d['base_lr']})")
    p.add_argument("--weight-decay", type=float, default=None, dest="weight_decay",
                   help=f"decoupled weight decay (default {d['weight_decay']})")
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size", help="batch size (default 32)")
    p.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    p.add_argument("--q", type=float, default=None, help="Renyi order for mask selection (default 2)")
    p.add_argument("--s", type=int, default=None, help="intensity bin spacing (default 8)")
    p.add_argument("--ratio", type=float, default=None, help="mask ratio (default 0.75)")
    p.add_argument("--policy", choices=("multifractal", "random", "inverted"), default=None,
                   help="mask selection policy (default multifractal)")
    p.add_argument("--patch-size", type=int, default=None, dest="patch_size",
                   help="patch side in pixels (default 16)")
    if stage == "pretrain":
        p.add_argument("--normalize-targets", action="store_true", dest="normalize_targets",
                       help="standardize each target patch before the reconstruction loss")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momae",
        description="Entropy-guided masked autoencoder: patch analysis, masking, training, evaluation.",
        epilog="MOMAE_THREADS caps internal parallelism (default: machine parallelism).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-patch Renyi entropies, heatmap, and tau(q) of an image")
    p.add_argument("image", help="input PGM (P5) or PPM (P6) image")
    _add_entropy_flags(p)
    p.add_argument("--out", default=".", help="output directory (default .)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mask", help="compute a visible/masked plan and a dimmed preview image")
    p.add_argument("image", help="input PGM (P5) or PPM (P6) image")
    p.add_argument("--ratio", type=float, default=0.75, help="mask ratio (default 0.75)")
    p.add_argument("--policy", choices=("multifractal", "random", "inverted"),
                   default="multifractal", help="selection policy (default multifractal)")
    p.add_argument("--seed", type=int, default=0, help="seed for the random policy (default 0)")
    _add_entropy_flags(p)
    p.add_argument("--out", default=".", help="output directory (default .)")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("pretrain", help="masked-reconstruction pretraining on a MOMD container")
    _add_train_flags(p, "pretrain")
    p.add_argument("--data", required=True, help="training container (.momd)")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning from a pretraining checkpoint")
    _add_train_flags(p, "finetune")
    p.add_argument("--ckpt", required=True, help="pretraining checkpoint")
    p.add_argument("--data", required=True, help="labeled training container (.momd)")
    p.add_argument("--val", default=None, help="optional validation container (.momd)")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="metrics JSON, PR-curve CSV and confusion CSV for a test set")
    p.add_argument("--ckpt", required=True, help="fine-tuned checkpoint")
    p.add_argument("--data", required=True, help="test container (.momd)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--ops-only", action="store_true", help="skip the composite model check")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (
        FormatError,
        DataError,
        DegenerateInputError,
        CheckpointCorruptError,
        CheckpointIncompatibleError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MomaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
