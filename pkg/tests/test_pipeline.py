import io
import math

import numpy as np
import pytest

from momae.dataio import DatasetContainer
from momae.errors import InvalidArgumentError, TrainingDivergedError
from momae.mae import ViTConfig
from momae.pipeline import (
    binary_pr_curve,
    binary_roc_auc,
    compute_metrics,
    evaluate,
    export_confusion,
    export_pr_curve,
    finetune,
    finetune_config,
    metrics_to_json,
    model_from_checkpoint,
    pretrain,
    pretrain_config,
    pr_auc_from_curve,
)

TINY_VIT = ViTConfig(
    image_height=16,
    image_width=16,
    channels=1,
    patch_size=8,
    encoder_dim=16,
    decoder_dim=8,
    encoder_layers=2,
    decoder_layers=2,
    heads=2,
    mlp_ratio=2,
)


def texture_dataset(count, seed=0, num_classes=2):
    """Half flat images (label 0), half uniform noise (label 1)."""
    rng = np.random.default_rng(seed)
    images = np.zeros((count, 16, 16, 1), dtype=np.uint8)
    labels = np.zeros(count, dtype=np.int64)
    for i in range(count):
        if i % 2:
            images[i, :, :, 0] = rng.integers(0, 256, size=(16, 16))
            labels[i] = 1
        else:
            images[i, :, :, 0] = rng.integers(40, 216)
    return DatasetContainer(images=images, labels=labels, num_classes=num_classes)


# ---------------------------------------------------------------------------
# metric oracles
# ---------------------------------------------------------------------------


def brute_roc_auc(scores, positive):
    """O(n^2) pairwise statistic, accumulated as exact integers."""
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    doubled = 0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                doubled += 2
            elif sp == sn:
                doubled += 1
    return doubled / (2 * len(pos) * len(neg))


def test_roc_auc_equals_pairwise_oracle_exactly():
    rng = np.random.default_rng(10)
    for trial in range(300):
        n = int(rng.integers(2, 13))
        labels = rng.integers(0, 2, size=n).astype(bool)
        if labels.all() or not labels.any():
            continue
        # coarse grid of scores forces plenty of ties
        scores = rng.integers(0, 4, size=n) / 3.0
        assert binary_roc_auc(scores, labels) == brute_roc_auc(scores, labels)


def test_roc_auc_uniform_scores_near_half():
    rng = np.random.default_rng(11)
    n = 2000
    labels = np.repeat([0, 1], n // 2).astype(bool)
    scores = rng.random(n)
    assert abs(binary_roc_auc(scores, labels) - 0.5) <= 0.03


def test_roc_auc_perfect_and_degenerate():
    assert binary_roc_auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0], bool)) == 1.0
    assert binary_roc_auc(np.array([0.5, 0.5]), np.array([1, 1], bool)) is None


def test_pr_curve_perfect_classifier_all_precision_one():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([1, 1, 0, 0], bool)
    curve = binary_pr_curve(scores, labels)
    assert all(p == 1.0 for _, _, p in curve)
    assert pr_auc_from_curve(curve) == 1.0


def test_pr_curve_single_threshold_has_interior_row_plus_endpoints():
    curve = binary_pr_curve(np.array([0.5, 0.5, 0.5, 0.5]), np.array([1, 0, 1, 0], bool))
    assert len(curve) == 3
    assert curve[0] == (math.inf, 0.0, 1.0)
    assert curve[1] == (0.5, 1.0, 0.5)
    assert curve[2] == (-math.inf, 1.0, 0.5)


def test_pr_curve_thresholds_descending_and_recall_monotone():
    rng = np.random.default_rng(12)
    scores = rng.integers(0, 5, size=40) / 4.0
    labels = rng.integers(0, 2, size=40).astype(bool)
    curve = binary_pr_curve(scores, labels)
    thresholds = [t for t, _, _ in curve]
    recalls = [r for _, r, _ in curve]
    assert all(a > b for a, b in zip(thresholds, thresholds[1:]))
    assert all(a <= b for a, b in zip(recalls, recalls[1:]))


def test_compute_metrics_perfect_predictions():
    scores = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.9], [0.2, 0.8]])
    labels = np.array([0, 0, 1, 1])
    m = compute_metrics(scores, labels)
    assert m.accuracy == 1.0
    assert m.f1 == 1.0
    assert m.roc_auc == 1.0
    assert m.pr_auc == 1.0
    assert m.confusion.tolist() == [[2, 0], [0, 2]]


def test_confusion_diagonal_equals_accuracy():
    rng = np.random.default_rng(13)
    scores = rng.random((50, 3))
    scores /= scores.sum(axis=1, keepdims=True)
    labels = rng.integers(0, 3, size=50)
    m = compute_metrics(scores, labels)
    assert m.accuracy == np.trace(m.confusion) / m.confusion.sum()
    assert m.confusion.sum() == 50


def test_multiclass_macro_f1_matches_manual():
    scores = np.array(
        [[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.1, 0.2, 0.7], [0.5, 0.4, 0.1], [0.3, 0.3, 0.4]]
    )
    labels = np.array([0, 1, 2, 1, 2])
    m = compute_metrics(scores, labels)
    conf = m.confusion
    per_class = []
    for c in range(3):
        tp = conf[c, c]
        fp = conf[:, c].sum() - tp
        fn = conf[c, :].sum() - tp
        per_class.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
    assert m.f1 == pytest.approx(np.mean(per_class), abs=1e-15)


def test_export_pr_curve_reintegrates(tmp_path):
    rng = np.random.default_rng(14)
    scores = rng.random((30, 2))
    scores /= scores.sum(axis=1, keepdims=True)
    labels = rng.integers(0, 2, size=30)
    m = compute_metrics(scores, labels)
    path = tmp_path / "pr.csv"
    export_pr_curve(m, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "threshold,recall,precision"
    rows = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
    assert abs(pr_auc_from_curve(rows) - m.pr_auc) <= 1e-9


def test_metrics_json_keys(tmp_path):
    m = compute_metrics(np.array([[0.7, 0.3], [0.2, 0.8]]), np.array([0, 1]))
    import json

    doc = json.loads(metrics_to_json(m))
    assert list(doc) == ["accuracy", "f1", "pr_auc", "roc_auc", "confusion"]
    export_confusion(m, tmp_path / "cm.csv")
    assert (tmp_path / "cm.csv").read_text() == "1,0\n0,1\n"


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------


def test_pretrain_zero_epochs_returns_initialization():
    from momae.mae import init_params

    ds = texture_dataset(1, seed=1)
    cfg = pretrain_config(epochs=0, seed=3, batch_size=1)
    ckpt = pretrain(ds, cfg, TINY_VIT)
    fresh = init_params(TINY_VIT, seed=3, with_decoder=True)
    for name, arr in fresh.arrays().items():
        assert (ckpt.arrays[name] == arr).all()


def test_pretrain_deterministic_bit_identical():
    ds = texture_dataset(6, seed=2)
    cfg = pretrain_config(epochs=2, seed=5, batch_size=3)
    a = pretrain(ds, cfg, TINY_VIT)
    b = pretrain(ds, cfg, TINY_VIT)
    for name in a.arrays:
        assert (a.arrays[name] == b.arrays[name]).all()


def test_pretrain_rejects_empty_dataset():
    empty = DatasetContainer(
        images=np.zeros((0, 16, 16, 1), dtype=np.uint8),
        labels=np.zeros(0, dtype=np.int64),
        num_classes=2,
    )
    with pytest.raises(InvalidArgumentError):
        pretrain(empty, pretrain_config(epochs=1), TINY_VIT)


def test_pretrain_loss_decreases():
    ds = texture_dataset(4, seed=4)
    log = io.StringIO()
    cfg = pretrain_config(epochs=30, seed=1, batch_size=4, base_lr=2e-3)
    pretrain(ds, cfg, TINY_VIT, log=log)
    losses = [
        float(line.split("loss=")[1]) for line in log.getvalue().splitlines() if line.startswith("epoch=")
    ]
    assert len(losses) == 30
    assert losses[-1] < losses[0] * 0.8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_pretrain_divergence_error():
    ds = texture_dataset(2, seed=6)
    cfg = pretrain_config(epochs=60, seed=1, batch_size=2, base_lr=1e6, warmup_frac=0.0)
    with pytest.raises(TrainingDivergedError, match="epoch"):
        pretrain(ds, cfg, TINY_VIT)


def test_log_format_and_plan_hash_ablation_structure():
    ds = texture_dataset(4, seed=7)
    logs = {}
    for policy in ("multifractal", "random"):
        stream = io.StringIO()
        cfg = pretrain_config(epochs=1, seed=9, batch_size=2, policy=policy)
        pretrain(ds, cfg, TINY_VIT, log=stream)
        logs[policy] = stream.getvalue().splitlines()
    for lines in logs.values():
        assert lines[0].startswith("init sha256=")
        assert sum(1 for l in lines if l.startswith("plan index=")) == 4
        assert lines[-1].startswith("epoch=0 lr=")
    # same seed: identical initialization, different mask plans
    assert logs["multifractal"][0] == logs["random"][0]
    plans_mf = [l for l in logs["multifractal"] if l.startswith("plan ")]
    plans_rnd = [l for l in logs["random"] if l.startswith("plan ")]
    assert plans_mf != plans_rnd


def test_finetune_zero_epochs_keeps_encoder():
    ds = texture_dataset(4, seed=8)
    pre = pretrain(ds, pretrain_config(epochs=1, seed=2, batch_size=2), TINY_VIT)
    ft = finetune(pre, ds, finetune_config(epochs=0, seed=2))
    for name, arr in ft.arrays.items():
        if name in pre.arrays:
            assert (arr == pre.arrays[name]).all()
    assert "cls_head.weight" in ft.arrays
    assert "mask_token" not in ft.arrays


def test_finetune_rejects_single_class():
    ds = texture_dataset(4, seed=9)
    pre = pretrain(ds, pretrain_config(epochs=0, seed=2, batch_size=2), TINY_VIT)
    single = DatasetContainer(images=ds.images, labels=np.zeros(4, dtype=np.int64), num_classes=1)
    with pytest.raises(InvalidArgumentError):
        finetune(pre, single, finetune_config(epochs=1))


def test_thread_count_env_validation(monkeypatch):
    from momae.pipeline import thread_count

    monkeypatch.setenv("MOMAE_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("MOMAE_THREADS", "zero")
    with pytest.raises(InvalidArgumentError):
        thread_count()
    monkeypatch.setenv("MOMAE_THREADS", "0")
    with pytest.raises(InvalidArgumentError):
        thread_count()
    monkeypatch.delenv("MOMAE_THREADS")
    assert thread_count() >= 1


def test_evaluation_independent_of_thread_count(monkeypatch):
    ds = texture_dataset(12, seed=14)
    pre = pretrain(ds, pretrain_config(epochs=1, seed=3, batch_size=4), TINY_VIT)
    ft = finetune(pre, ds, finetune_config(epochs=1, seed=3, batch_size=4))
    params = model_from_checkpoint(ft)
    results = {}
    for threads in ("1", "4"):
        monkeypatch.setenv("MOMAE_THREADS", threads)
        m = evaluate(params, ds)
        results[threads] = (m.accuracy, m.f1, m.pr_auc, m.roc_auc, m.confusion.tolist())
    assert results["1"] == results["4"]


def test_finetune_and_evaluate_learns_texture_task():
    vit = ViTConfig(
        image_height=16, image_width=16, channels=1, patch_size=8, encoder_dim=32,
        decoder_dim=16, encoder_layers=2, decoder_layers=2, heads=4, mlp_ratio=2,
    )
    train = texture_dataset(200, seed=20)
    test = texture_dataset(50, seed=21)
    pre = pretrain(train, pretrain_config(epochs=2, seed=0, batch_size=32), vit)
    ft = finetune(pre, train, finetune_config(epochs=20, seed=0, batch_size=8))
    metrics = evaluate(model_from_checkpoint(ft), test)
    assert metrics.accuracy >= 0.9
    assert metrics.confusion.sum() == 50
