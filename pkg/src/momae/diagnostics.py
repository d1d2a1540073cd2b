"""Finite-difference verification suite for every differentiable operation.

Checks run at 64-bit on fixed-seed inputs. Weights are drawn at O(1) scale
with layer-norm scales near 1: at the tiny training initialization some
gradients sit below what central differences can resolve, which would report
noise instead of correctness.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .mae import ModelParams, ViTConfig, init_params, pretrain_loss
from .masker import random_mask
from .numerics import (
    Tensor,
    concat,
    cross_entropy_loss,
    gather_rows,
    gelu,
    grad_check,
    layer_norm,
    matmul,
    mean,
    mse_loss,
    mul,
    reshape,
    slice_rows,
    softmax,
    transpose,
    add,
)
from .patching import image_from_array, partition_patches

GRADCHECK_BOUND = 1e-4


class CheckResult(NamedTuple):
    name: str
    error: float

    @property
    def passed(self) -> bool:
        return self.error <= GRADCHECK_BOUND


def condition_weights(params: ModelParams, seed: int, scale: float = 0.6) -> None:
    """Redraw parameters at a scale where no gradient drowns in difference noise."""
    rng = np.random.default_rng(seed)
    for name, tensor in params.tensors.items():
        if name.endswith(".scale"):
            tensor.data = 1.0 + rng.normal(0.0, scale / 2, size=tensor.data.shape)
        elif name.endswith((".offset", ".bias")) or name == "mask_token":
            tensor.data = rng.normal(0.0, scale / 2, size=tensor.data.shape)
        else:
            tensor.data = rng.normal(0.0, scale, size=tensor.data.shape)


def _rnd(shape, seed):
    return np.random.default_rng(seed).normal(size=shape)


def _t(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def op_checks() -> list[CheckResult]:
    """Central-difference check of each forward operation in isolation."""
    const_a = Tensor(_rnd((3, 4), 100))
    const_b = Tensor(_rnd((3, 8), 101))
    cases = [
        ("add", lambda a, b: mean(add(a, b)), [_rnd((3, 4), 0), _rnd(4, 1)]),
        ("mul", lambda a, b: mean(mul(a, b)), [_rnd((3, 4), 2), _rnd((3, 4), 3)]),
        ("matmul", lambda a, b: mean(matmul(a, b)), [_rnd((3, 4), 4), _rnd((4, 2), 5)]),
        ("matmul_batched", lambda a, b: mean(matmul(a, b)), [_rnd((2, 3, 4), 6), _rnd((2, 4, 3), 7)]),
        ("transpose", lambda a: mean(mul(transpose(a), transpose(a))), [_rnd((3, 4), 8)]),
        ("reshape", lambda a: mean(mul(reshape(a, (2, 6)), reshape(a, (2, 6)))), [_rnd((3, 4), 9)]),
        ("concat", lambda a, b: mean(mul(concat([a, b]), concat([b, a]))), [_rnd((2, 3), 10), _rnd((2, 3), 11)]),
        ("gather_rows", lambda a: mean(mul(gather_rows(a, [0, 2, 2]), gather_rows(a, [1, 0, 2]))), [_rnd((3, 4), 12)]),
        ("slice_rows", lambda a: mean(mul(slice_rows(a, 1, 3), slice_rows(a, 0, 2))), [_rnd((4, 3), 13)]),
        ("gelu", lambda a: mean(gelu(a)), [_rnd((3, 4), 14)]),
        ("softmax", lambda a: mean(mul(softmax(a, axis=-1), const_a)), [_rnd((3, 4), 16)]),
        ("layer_norm", lambda a: mean(mul(layer_norm(a, axis=-1), const_b)), [_rnd((3, 8), 18)]),
        ("mean_axis", lambda a: mean(mul(mean(a, axis=0), Tensor(_rnd(5, 19)))), [_rnd((4, 5), 20)]),
        ("mse_loss", lambda a, b: mse_loss(a, b), [_rnd((3, 4), 21), _rnd((3, 4), 22)]),
        ("cross_entropy_loss", lambda a: cross_entropy_loss(a, np.array([0, 2, 1])), [_rnd((3, 4), 23)]),
    ]
    results = []
    for name, fn, inputs in cases:
        results.append(CheckResult(name, grad_check(fn, [_t(x) for x in inputs])))
    return results


def composite_check(
    encoder_layers: int = 4, decoder_layers: int = 4, weight_seed: int = 11
) -> CheckResult:
    """Check the full masked-reconstruction loss end to end at tiny dimensions."""
    config = ViTConfig(
        image_height=16,
        image_width=16,
        channels=1,
        patch_size=4,
        encoder_dim=8,
        decoder_dim=8,
        encoder_layers=encoder_layers,
        decoder_layers=decoder_layers,
        heads=2,
        mlp_ratio=2,
    )
    params = init_params(config, seed=25, dtype=np.float64)
    condition_weights(params, seed=weight_seed)
    rng = np.random.default_rng(26)
    img = image_from_array(rng.integers(0, 256, size=(16, 16, 1)).astype(np.uint8))
    grid = partition_patches(img, config.patch_size)
    plan = random_mask(config.n_patches, 0.75, seed=10)
    err = grad_check(
        lambda *_: pretrain_loss(img, grid, plan, params), list(params.tensors.values())
    )
    return CheckResult("mae_pretrain_loss", err)


def run_suite(include_composite: bool = True) -> list[CheckResult]:
    results = op_checks()
    if include_composite:
        results.append(composite_check())
    return results
