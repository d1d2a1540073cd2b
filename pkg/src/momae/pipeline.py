"""Pretraining and fine-tuning loops, evaluation metrics, curve and matrix exports.

Runs are fully determined by (seed, config, dataset): data order, mask plans
and parameter initialization all derive from the run seed, and the training
log records the initialization hash and one mask-plan hash per image so two
runs can be compared structurally (e.g. entropy-guided vs random masking).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .dataio import Checkpoint, DatasetContainer
from .errors import (
    CheckpointIncompatibleError,
    DataError,
    InvalidArgumentError,
    TrainingDivergedError,
)
from .mae import (
    ModelParams,
    ViTConfig,
    classify_tokens,
    decode,
    embed_pixel_rows,
    encode,
    init_params,
    patch_pixels,
    _masked_mse,
)
from .masker import (
    MaskPlan,
    invert_plan,
    plan_to_text,
    random_mask,
    score_patches,
    select_visible,
)
from .numerics import AdamWState, Tape, adamw_step, backward, cross_entropy_loss, lr_schedule, reshape
from .patching import ImageBuffer, partition_patches, to_luminance

PRETRAIN_DEFAULTS = dict(epochs=200, base_lr=1.5e-4, weight_decay=0.05)
FINETUNE_DEFAULTS = dict(epochs=100, base_lr=1e-3, weight_decay=0.5)


@dataclass(frozen=True)
class TrainConfig:
    stage: str
    epochs: int
    base_lr: float
    weight_decay: float
    batch_size: int = 32
    mask_ratio: float = 0.75
    q: float = 2.0
    s: int = 8
    policy: str = "multifractal"
    seed: int = 0
    normalize_targets: bool = False
    warmup_frac: float = 0.1

    def __post_init__(self) -> None:
        if self.stage not in ("pretrain", "finetune"):
            raise InvalidArgumentError(f"stage must be pretrain or finetune, got {self.stage!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise InvalidArgumentError(f"mask ratio must lie in [0, 1], got {self.mask_ratio}")
        if self.policy not in ("multifractal", "random", "inverted"):
            raise InvalidArgumentError(f"unknown mask policy {self.policy!r}")
        if self.base_lr <= 0 or self.weight_decay < 0:
            raise InvalidArgumentError("base_lr must be positive and weight_decay non-negative")

    @property
    def warmup_epochs(self) -> int:
        return min(int(math.floor(self.warmup_frac * self.epochs + 0.5)), max(self.epochs - 1, 0))


def pretrain_config(**overrides) -> TrainConfig:
    return TrainConfig(stage="pretrain", **{**PRETRAIN_DEFAULTS, **overrides})


def finetune_config(**overrides) -> TrainConfig:
    return TrainConfig(stage="finetune", **{**FINETUNE_DEFAULTS, **overrides})


def thread_count() -> int:
    """Worker cap for data-parallel scoring/evaluation (env MOMAE_THREADS)."""
    raw = os.environ.get("MOMAE_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise InvalidArgumentError(f"MOMAE_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise InvalidArgumentError(f"MOMAE_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def _map_by_index(fn, items: Iterable, workers: int) -> list:
    """Apply fn to each item; results ordered by index regardless of scheduling."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# mask plans
# ---------------------------------------------------------------------------


def _content_key(image: ImageBuffer) -> str:
    return hashlib.sha256(image.data.tobytes()).hexdigest()


def plan_hash(plan: MaskPlan) -> str:
    return hashlib.sha256(plan_to_text(plan).encode("utf-8")).hexdigest()


def _build_plans(
    dataset: DatasetContainer, vit: ViTConfig, config: TrainConfig
) -> list[MaskPlan]:
    """One fixed plan per image.

    Entropy scores are pure functions of the pixels, so entropy-based plans
    are computed once per distinct image content (scored in parallel, merged
    by index). Random plans draw one sub-seed per image from the run seed.
    """
    if config.policy == "random":
        plan_seeds = np.random.default_rng([config.seed, 1]).integers(0, 2**63, size=len(dataset))
        return [
            random_mask(vit.n_patches, config.mask_ratio, int(plan_seeds[i]))
            for i in range(len(dataset))
        ]
    images = [dataset.image(i) for i in range(len(dataset))]
    keys = [_content_key(image) for image in images]
    unique: dict[str, ImageBuffer] = {}
    for key, image in zip(keys, images):
        unique.setdefault(key, image)

    def scored(image: ImageBuffer) -> MaskPlan:
        lum = to_luminance(image)
        grid = partition_patches(lum, vit.patch_size)
        return select_visible(score_patches(lum, grid, config.q, config.s), config.mask_ratio)

    unique_keys = list(unique)
    plans = dict(zip(unique_keys, _map_by_index(scored, [unique[k] for k in unique_keys], thread_count())))
    result = [plans[key] for key in keys]
    if config.policy == "inverted":
        result = [invert_plan(plan) for plan in result]
    return result


def _check_dataset(dataset: DatasetContainer, vit: ViTConfig) -> None:
    if len(dataset) == 0:
        raise InvalidArgumentError("dataset is empty")
    h, w, c = dataset.shape_hwc
    if (h, w, c) != (vit.image_height, vit.image_width, vit.channels):
        raise DataError(
            f"dataset images are {h}x{w}x{c}, model expects "
            f"{vit.image_height}x{vit.image_width}x{vit.channels}"
        )


def _params_hash(params: ModelParams) -> str:
    digest = hashlib.sha256()
    for name in params.names():
        digest.update(name.encode("utf-8"))
        digest.update(params[name].data.tobytes())
    return digest.hexdigest()


def _pixel_cache(dataset: DatasetContainer, vit: ViTConfig, dtype) -> list[np.ndarray]:
    rows = []
    for i in range(len(dataset)):
        image = dataset.image(i)
        grid = partition_patches(image, vit.patch_size)
        rows.append(patch_pixels(image, grid, dtype))
    return rows


def _batches(order: np.ndarray, batch_size: int) -> Iterable[np.ndarray]:
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def _log(stream: IO[str] | None, line: str) -> None:
    if stream is not None:
        stream.write(line + "\n")


def _checkpoint(params: ModelParams, config: TrainConfig, stage: str) -> Checkpoint:
    metadata = {
        "stage": stage,
        "seed": config.seed,
        "train_config": asdict(config),
        "vit": params.config.to_dict(),
    }
    arrays = {name: arr.copy() for name, arr in params.arrays().items()}
    return Checkpoint(metadata=metadata, arrays=arrays)


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------


def pretrain(
    dataset: DatasetContainer,
    config: TrainConfig,
    vit: ViTConfig,
    log: IO[str] | None = None,
) -> Checkpoint:
    """Masked-reconstruction pretraining; returns the final parameters."""
    if config.stage != "pretrain":
        raise InvalidArgumentError(f"pretrain called with stage={config.stage!r}")
    if vit.num_classes != 0:
        vit = replace(vit, num_classes=0)
    _check_dataset(dataset, vit)
    params = init_params(vit, seed=config.seed, with_decoder=True)
    _log(log, f"init sha256={_params_hash(params)}")
    plans = _build_plans(dataset, vit, config)
    for i, plan in enumerate(plans):
        _log(log, f"plan index={i} sha256={plan_hash(plan)}")
    pixels = _pixel_cache(dataset, vit, params.dtype)
    state = AdamWState(lr=0.0, weight_decay=config.weight_decay)
    order_rng = np.random.default_rng([config.seed, 0])
    step = 0
    for epoch in range(config.epochs):
        state.lr = lr_schedule(config.base_lr, epoch, config.epochs, config.warmup_epochs)
        order = order_rng.permutation(len(dataset))
        epoch_losses = []
        for batch in _batches(order, config.batch_size):
            grad_sums: dict[str, np.ndarray] = {}
            for idx in batch:
                idx = int(idx)
                with Tape() as tape:
                    tokens = embed_pixel_rows(pixels[idx], params)
                    latent = encode(tokens, plans[idx], params)
                    pred = decode(latent, plans[idx], params)
                    loss = _masked_mse(pred, pixels[idx], plans[idx], config.normalize_targets)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, step {step} (image {idx})"
                    )
                epoch_losses.append(value)
                backward(loss, tape)
                for name, tensor in params.tensors.items():
                    if name in grad_sums:
                        grad_sums[name] += tensor.grad
                    else:
                        grad_sums[name] = tensor.grad.astype(np.float64)
                    tensor.zero_grad()
            scale = 1.0 / len(batch)
            adamw_step(params.tensors, {k: g * scale for k, g in grad_sums.items()}, state)
            step += 1
        _log(log, f"epoch={epoch} lr={state.lr!r} loss={sum(epoch_losses) / len(epoch_losses)!r}")
    return _checkpoint(params, config, "pretrain")


def finetune(
    checkpoint: Checkpoint,
    dataset: DatasetContainer,
    config: TrainConfig,
    log: IO[str] | None = None,
) -> Checkpoint:
    """Supervised fine-tuning of the pretrained encoder plus a fresh classifier."""
    if config.stage != "finetune":
        raise InvalidArgumentError(f"finetune called with stage={config.stage!r}")
    if dataset.num_classes < 2:
        raise InvalidArgumentError(
            f"classification needs at least 2 classes, dataset declares {dataset.num_classes}"
        )
    vit_meta = checkpoint.metadata.get("vit")
    if not isinstance(vit_meta, dict):
        raise CheckpointIncompatibleError("checkpoint metadata lacks the model configuration")
    vit = ViTConfig(**{**vit_meta, "num_classes": dataset.num_classes})
    _check_dataset(dataset, vit)
    params = init_params(vit, seed=config.seed, with_decoder=False)
    params.load_arrays(checkpoint.arrays, subset=True)
    pixels = _pixel_cache(dataset, vit, params.dtype)
    labels = dataset.labels
    state = AdamWState(lr=0.0, weight_decay=config.weight_decay)
    order_rng = np.random.default_rng([config.seed, 2])
    step = 0
    for epoch in range(config.epochs):
        state.lr = lr_schedule(config.base_lr, epoch, config.epochs, config.warmup_epochs)
        order = order_rng.permutation(len(dataset))
        epoch_losses = []
        for batch in _batches(order, config.batch_size):
            grad_sums: dict[str, np.ndarray] = {}
            for idx in batch:
                idx = int(idx)
                with Tape() as tape:
                    logits = classify_tokens(embed_pixel_rows(pixels[idx], params), params)
                    loss = cross_entropy_loss(
                        reshape(logits, (1, vit.num_classes)), np.array([labels[idx]])
                    )
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, step {step} (image {idx})"
                    )
                epoch_losses.append(value)
                backward(loss, tape)
                for name, tensor in params.tensors.items():
                    if name in grad_sums:
                        grad_sums[name] += tensor.grad
                    else:
                        grad_sums[name] = tensor.grad.astype(np.float64)
                    tensor.zero_grad()
            scale = 1.0 / len(batch)
            adamw_step(params.tensors, {k: g * scale for k, g in grad_sums.items()}, state)
            step += 1
        _log(log, f"epoch={epoch} lr={state.lr!r} loss={sum(epoch_losses) / len(epoch_losses)!r}")
    return _checkpoint(params, config, "finetune")


def model_from_checkpoint(checkpoint: Checkpoint) -> ModelParams:
    """Rebuild ModelParams from a fine-tuned (or pretrained) checkpoint."""
    vit_meta = checkpoint.metadata.get("vit")
    if not isinstance(vit_meta, dict):
        raise CheckpointIncompatibleError("checkpoint metadata lacks the model configuration")
    vit = ViTConfig(**vit_meta)
    with_decoder = any(name == "mask_token" for name in checkpoint.arrays)
    params = init_params(vit, seed=0, with_decoder=with_decoder)
    params.load_arrays(checkpoint.arrays)
    return params


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class Metrics:
    accuracy: float
    f1: float
    pr_auc: float
    roc_auc: float
    pr_curve: list[tuple[float, float, float]]  # (threshold, recall, precision)
    confusion: np.ndarray = field(repr=False)  # rows: true class, cols: predicted


def binary_roc_auc(scores: np.ndarray, positive: np.ndarray) -> float | None:
    """Mann-Whitney statistic: P(score_pos > score_neg) with half credit for ties.

    Computed from integer pair counts, so it matches an O(n^2) enumeration
    exactly. Returns None when either class is absent.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = int(len(positive) - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    doubled = 0  # 2 * wins + ties, an exact integer
    neg_below = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        pos_here = neg_here = 0
        while j < n and scores[order[j]] == scores[order[i]]:
            if positive[order[j]]:
                pos_here += 1
            else:
                neg_here += 1
            j += 1
        doubled += pos_here * (2 * neg_below + neg_here)
        neg_below += neg_here
        i = j
    return doubled / (2 * n_pos * n_neg)


def binary_pr_curve(
    scores: np.ndarray, positive: np.ndarray
) -> list[tuple[float, float, float]] | None:
    """(threshold, recall, precision) rows, thresholds descending.

    Rows cover every distinct score down to the one where recall first reaches
    1 (lower thresholds only dilute precision), framed by a (recall 0,
    precision 1) start anchor and an end anchor repeating the full-recall
    point. Returns None when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    rows: list[tuple[float, float, float]] = [(math.inf, 0.0, 1.0)]
    tp = predicted = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        threshold = scores[order[i]]
        while j < n and scores[order[j]] == threshold:
            if positive[order[j]]:
                tp += 1
            predicted += 1
            j += 1
        rows.append((float(threshold), tp / n_pos, tp / predicted))
        if tp == n_pos:
            break
        i = j
    rows.append((-math.inf, 1.0, rows[-1][2]))
    return rows


def pr_auc_from_curve(rows: list[tuple[float, float, float]]) -> float:
    """Trapezoidal area under (recall, precision) points."""
    area = 0.0
    for (_, r1, p1), (_, r2, p2) in zip(rows, rows[1:]):
        area += (r2 - r1) * (p1 + p2) / 2.0
    return area


def _f1_from_confusion(confusion: np.ndarray, cls: int) -> float:
    tp = int(confusion[cls, cls])
    fp = int(confusion[:, cls].sum()) - tp
    fn = int(confusion[cls, :].sum()) - tp
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def compute_metrics(scores: np.ndarray, labels: np.ndarray) -> Metrics:
    """Metrics from per-sample class scores (rows sum to 1) and integer labels.

    Binary tasks treat class 1 as positive. Multi-class F1 and both AUCs are
    macro averages over one-vs-rest reductions (classes missing a positive or
    negative example are skipped); the stored PR curve is then the micro
    (pooled one-vs-rest) curve, so it re-integrates to pr_auc only for binary
    tasks where pr_auc is the curve's own area.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or len(scores) != len(labels) or len(labels) == 0:
        raise InvalidArgumentError("need an (n, classes) score matrix and n labels, n >= 1")
    n, k = scores.shape
    if k < 2:
        raise InvalidArgumentError("need at least 2 classes")
    if labels.min() < 0 or labels.max() >= k:
        raise InvalidArgumentError(f"labels must lie in [0, {k})")
    predicted = scores.argmax(axis=1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    accuracy = float(np.trace(confusion)) / n

    if k == 2:
        f1 = _f1_from_confusion(confusion, 1)
        roc = binary_roc_auc(scores[:, 1], labels == 1)
        curve = binary_pr_curve(scores[:, 1], labels == 1)
        pr = pr_auc_from_curve(curve) if curve is not None else 0.0
        return Metrics(
            accuracy=accuracy,
            f1=f1,
            pr_auc=pr,
            roc_auc=roc if roc is not None else 0.0,
            pr_curve=curve if curve is not None else [],
            confusion=confusion,
        )

    f1 = float(np.mean([_f1_from_confusion(confusion, c) for c in range(k)]))
    rocs, prs = [], []
    for c in range(k):
        pos = labels == c
        roc = binary_roc_auc(scores[:, c], pos)
        if roc is not None:
            rocs.append(roc)
        curve = binary_pr_curve(scores[:, c], pos)
        if curve is not None and not pos.all():
            prs.append(pr_auc_from_curve(curve))
    pooled_scores = scores.ravel()
    pooled_labels = (labels[:, None] == np.arange(k)[None, :]).ravel()
    micro_curve = binary_pr_curve(pooled_scores, pooled_labels) or []
    return Metrics(
        accuracy=accuracy,
        f1=f1,
        pr_auc=float(np.mean(prs)) if prs else 0.0,
        roc_auc=float(np.mean(rocs)) if rocs else 0.0,
        pr_curve=micro_curve,
        confusion=confusion,
    )


def _stable_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted, dtype=np.float64)
    return e / e.sum()


def evaluate(params: ModelParams, dataset: DatasetContainer) -> Metrics:
    """Forward the whole dataset through the classifier and compute metrics."""
    vit = params.config
    if vit.num_classes < 2:
        raise InvalidArgumentError("model is not configured for classification")
    _check_dataset(dataset, vit)
    pixels = _pixel_cache(dataset, vit, params.dtype)

    def score_one(rows: np.ndarray) -> np.ndarray:
        logits = classify_tokens(embed_pixel_rows(rows, params), params)
        return _stable_softmax(logits.data.astype(np.float64))

    scores = np.stack(_map_by_index(score_one, pixels, thread_count()))
    return compute_metrics(scores, dataset.labels)


# ---------------------------------------------------------------------------
# serialization of results
# ---------------------------------------------------------------------------


def metrics_to_json(metrics: Metrics) -> str:
    doc = {
        "accuracy": metrics.accuracy,
        "f1": metrics.f1,
        "pr_auc": metrics.pr_auc,
        "roc_auc": metrics.roc_auc,
        "confusion": metrics.confusion.tolist(),
    }
    return json.dumps(doc, indent=2) + "\n"


def export_pr_curve(metrics: Metrics, path: str | Path) -> None:
    """CSV of the stored PR curve: header threshold,recall,precision, descending."""
    lines = ["threshold,recall,precision"]
    for threshold, recall, precision in metrics.pr_curve:
        lines.append(f"{threshold!r},{recall!r},{precision!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_confusion(metrics: Metrics, path: str | Path) -> None:
    """CSV of confusion counts, one row per true class."""
    lines = [",".join(str(int(v)) for v in row) for row in metrics.confusion]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
