"""Entropy-guided masked autoencoder toolkit.

Scores image patches by Renyi entropy over intensity histograms, selects the
most complex patches as the visible input of a masked autoencoder, trains a
small ViT encoder/decoder by masked reconstruction, and fine-tunes the encoder
for classification with ACC / F1 / PR-AUC / ROC-AUC reporting.
"""

from .dataio import (
    Checkpoint,
    DatasetContainer,
    load_checkpoint,
    load_container,
    load_pgm_ppm,
    save_checkpoint,
    save_container,
    save_pgm_ppm,
    write_heatmap,
)
from .mae import ModelParams, ViTConfig, classify_forward, decode, encode, init_params, patch_embed
from .masker import (
    MaskPlan,
    PatchScores,
    invert_plan,
    plan_from_text,
    plan_to_text,
    random_mask,
    score_patches,
    select_visible,
)
from .mfcore import (
    IntensityHistogram,
    ProbabilityDistribution,
    RenyiResult,
    TauEstimate,
    build_histogram,
    estimate_tau,
    fit_scaling_exponent,
    normalize,
    partition_function,
    renyi_entropy,
    shannon_entropy,
)
from .numerics import AdamWState, Tape, Tensor, adamw_step, backward, grad_check, lr_schedule
from .patching import ImageBuffer, Patch, PatchGrid, extract, image_from_array, partition_patches, to_luminance
from .pipeline import (
    Metrics,
    TrainConfig,
    compute_metrics,
    evaluate,
    export_pr_curve,
    finetune,
    finetune_config,
    metrics_to_json,
    model_from_checkpoint,
    pretrain,
    pretrain_config,
)

__version__ = "0.1.0"
