"""Masked-autoencoder ViT: patch embedding, masked encoder, decoder, classifier head.

The encoder sees only the visible patches of a MaskPlan; the decoder scatters
the encoded tokens back to their grid positions, fills masked positions with a
shared learned mask token, and reconstructs per-patch pixels. Positional
information comes from fixed 2-D sinusoidal tables. For classification the
full (unmasked) patch sequence is encoded, mean-pooled, normalized and
projected to logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    CheckpointIncompatibleError,
    DegeneratePlanError,
    InvalidArgumentError,
    ShapeError,
)
from .masker import MaskPlan
from .mfcore import DEFAULT_LEVELS
from .numerics import (
    Tensor,
    add,
    concat,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    mean,
    mse_loss,
    mul,
    reshape,
    softmax,
    transpose,
)
from .patching import ImageBuffer, PatchGrid, partition_patches, patch_matrix


@dataclass(frozen=True)
class ViTConfig:
    image_height: int
    image_width: int
    channels: int = 1
    patch_size: int = 16
    encoder_dim: int = 192
    decoder_dim: int = 96
    encoder_layers: int = 4
    decoder_layers: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    num_classes: int = 0
    levels: int = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        if self.channels not in (1, 3):
            raise InvalidArgumentError(f"channels must be 1 or 3, got {self.channels}")
        if self.patch_size > min(self.image_height, self.image_width):
            raise InvalidArgumentError(
                f"patch size {self.patch_size} exceeds image extent "
                f"{self.image_height}x{self.image_width}"
            )
        for label, dim in (("encoder_dim", self.encoder_dim), ("decoder_dim", self.decoder_dim)):
            if dim % self.heads != 0:
                raise InvalidArgumentError(f"{label}={dim} not divisible by heads={self.heads}")
            if dim % 4 != 0:
                raise InvalidArgumentError(f"{label}={dim} must be divisible by 4 for 2-D sinusoidal tables")
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise InvalidArgumentError("layer counts must be positive")
        if self.num_classes == 1:
            raise InvalidArgumentError("classification needs at least 2 classes")

    @property
    def grid_rows(self) -> int:
        return self.image_height // self.patch_size

    @property
    def grid_cols(self) -> int:
        return self.image_width // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    def to_dict(self) -> dict:
        return asdict(self)


def sincos_table_1d(positions: np.ndarray, dim: int) -> np.ndarray:
    """Sine block then cosine block over a geometric frequency ladder; dim even."""
    if dim % 2 != 0:
        raise InvalidArgumentError(f"sinusoidal feature dim must be even, got {dim}")
    omega = 1.0 / (10000.0 ** (np.arange(dim // 2, dtype=np.float64) / (dim / 2.0)))
    angles = positions.astype(np.float64)[:, None] * omega[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def sincos_table_2d(rows: int, cols: int, dim: int) -> np.ndarray:
    """Fixed 2-D positional table: half the features encode the row, half the column."""
    if dim % 4 != 0:
        raise InvalidArgumentError(f"2-D sinusoidal table needs dim divisible by 4, got {dim}")
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    return np.concatenate(
        [sincos_table_1d(rr.ravel(), dim // 2), sincos_table_1d(cc.ravel(), dim // 2)],
        axis=1,
    )


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    x = rng.normal(0.0, std, size=shape)
    bad = np.abs(x) > 2.0 * std
    while bad.any():
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(x) > 2.0 * std
    return x


class ModelParams:
    """Named parameter tensors plus the two fixed positional tables.

    The mapping order is the checkpoint manifest order; positional tables are
    recomputed from the config, never serialized.
    """

    def __init__(self, config: ViTConfig, tensors: dict[str, Tensor], dtype=np.float32):
        self.config = config
        self.tensors = tensors
        self.dtype = dtype
        self.enc_pos = sincos_table_2d(config.grid_rows, config.grid_cols, config.encoder_dim).astype(dtype)
        self.dec_pos = sincos_table_2d(config.grid_rows, config.grid_cols, config.decoder_dim).astype(dtype)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}

    @property
    def has_decoder(self) -> bool:
        return "mask_token" in self.tensors

    def load_arrays(self, arrays: dict[str, np.ndarray], subset: bool = False) -> None:
        """Copy values in; with subset=True only names present in ``arrays`` load."""
        for name, tensor in self.tensors.items():
            if name not in arrays:
                if subset:
                    continue
                raise CheckpointIncompatibleError(f"checkpoint is missing parameter {name}")
            value = arrays[name]
            if tuple(value.shape) != tensor.data.shape:
                raise CheckpointIncompatibleError(
                    f"parameter {name}: checkpoint shape {tuple(value.shape)} "
                    f"does not match model shape {tensor.data.shape}"
                )
            tensor.data = value.astype(self.dtype, copy=True)


def _linear_params(rng, tensors, prefix, d_in, d_out, dtype, bias=True, xavier=False):
    weight = _xavier_uniform(rng, (d_in, d_out)) if xavier else _trunc_normal(rng, (d_in, d_out))
    tensors[prefix + ".weight"] = Tensor(weight.astype(dtype), requires_grad=True)
    if bias:
        tensors[prefix + ".bias"] = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)


def _norm_params(tensors, prefix, dim, dtype):
    tensors[prefix + ".scale"] = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
    tensors[prefix + ".offset"] = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)


def _block_params(rng, tensors, prefix, dim, mlp_ratio, dtype):
    _norm_params(tensors, prefix + ".ln1", dim, dtype)
    for proj in ("q", "k", "v", "o"):
        # A key bias would cancel inside the row-wise softmax, so k has none.
        _linear_params(rng, tensors, f"{prefix}.attn.{proj}", dim, dim, dtype, bias=proj != "k")
    _norm_params(tensors, prefix + ".ln2", dim, dtype)
    _linear_params(rng, tensors, prefix + ".mlp.fc1", dim, dim * mlp_ratio, dtype)
    _linear_params(rng, tensors, prefix + ".mlp.fc2", dim * mlp_ratio, dim, dtype)


def _xavier_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    config: ViTConfig,
    seed: int,
    dtype=np.float32,
    with_decoder: bool = True,
) -> ModelParams:
    """Seeded initialization: truncated-normal projections (std 0.02), zero biases
    and norm offsets, unit norm scales, truncated-normal mask token.

    The patch embedding uses Xavier-uniform instead: at std 0.02 the pixel
    signal entering the encoder would be dwarfed by the positional features.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    _linear_params(rng, tensors, "patch_embed", config.patch_dim, config.encoder_dim, dtype, xavier=True)
    for i in range(config.encoder_layers):
        _block_params(rng, tensors, f"encoder.{i}", config.encoder_dim, config.mlp_ratio, dtype)
    _norm_params(tensors, "encoder.norm", config.encoder_dim, dtype)
    if with_decoder:
        _linear_params(rng, tensors, "decoder_embed", config.encoder_dim, config.decoder_dim, dtype)
        tensors["mask_token"] = Tensor(_trunc_normal(rng, (config.decoder_dim,)).astype(dtype), requires_grad=True)
        for i in range(config.decoder_layers):
            _block_params(rng, tensors, f"decoder.{i}", config.decoder_dim, config.mlp_ratio, dtype)
        _norm_params(tensors, "decoder.norm", config.decoder_dim, dtype)
        _linear_params(rng, tensors, "recon_head", config.decoder_dim, config.patch_dim, dtype)
    if config.num_classes >= 2:
        _norm_params(tensors, "cls_norm", config.encoder_dim, dtype)
        _linear_params(rng, tensors, "cls_head", config.encoder_dim, config.num_classes, dtype)
    return ModelParams(config, tensors, dtype=dtype)


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------


def _affine_norm(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return add(mul(layer_norm(x, axis=-1), params[prefix + ".scale"]), params[prefix + ".offset"])


def _linear(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    out = matmul(x, params[prefix + ".weight"])
    if prefix + ".bias" in params:
        out = add(out, params[prefix + ".bias"])
    return out


def _attention(x: Tensor, params: ModelParams, prefix: str, heads: int) -> Tensor:
    n, dim = x.shape
    head_dim = dim // heads

    def split(name):
        proj = _linear(x, params, f"{prefix}.{name}")
        return transpose(reshape(proj, (n, heads, head_dim)), (1, 0, 2))  # (heads, n, hd)

    q, v = split("q"), split("v")
    k_t = transpose(reshape(_linear(x, params, f"{prefix}.k"), (n, heads, head_dim)), (1, 2, 0))
    scores = mul(matmul(q, k_t), 1.0 / np.sqrt(head_dim))
    context = matmul(softmax(scores, axis=-1), v)  # (heads, n, hd)
    merged = reshape(transpose(context, (1, 0, 2)), (n, dim))
    return _linear(merged, params, f"{prefix}.o")


def _transformer_block(x: Tensor, params: ModelParams, prefix: str, heads: int) -> Tensor:
    x = add(x, _attention(_affine_norm(x, params, prefix + ".ln1"), params, prefix + ".attn", heads))
    h = _affine_norm(x, params, prefix + ".ln2")
    h = _linear(gelu(_linear(h, params, prefix + ".mlp.fc1")), params, prefix + ".mlp.fc2")
    return add(x, h)


def _check_image(image: ImageBuffer, config: ViTConfig) -> None:
    if (image.height, image.width, image.channels) != (
        config.image_height,
        config.image_width,
        config.channels,
    ):
        raise ShapeError(
            f"image {image.height}x{image.width}x{image.channels} does not match "
            f"configured {config.image_height}x{config.image_width}x{config.channels}"
        )


def patch_pixels(image: ImageBuffer, grid: PatchGrid, dtype=np.float32) -> np.ndarray:
    """Per-patch pixel rows scaled to [0, 1]: shape (n_patches, patch_dim)."""
    return (patch_matrix(image, grid).astype(np.float64) / float(image.levels)).astype(dtype)


def patch_embed(image: ImageBuffer, grid: PatchGrid, params: ModelParams) -> Tensor:
    """Project scaled patch pixels to encoder tokens and add positional features."""
    config = params.config
    _check_image(image, config)
    if (grid.rows, grid.cols, grid.patch_size) != (config.grid_rows, config.grid_cols, config.patch_size):
        raise ShapeError(
            f"grid {grid.rows}x{grid.cols}/{grid.patch_size} does not match config "
            f"{config.grid_rows}x{config.grid_cols}/{config.patch_size}"
        )
    pixels = Tensor(patch_pixels(image, grid, params.dtype))
    return add(_linear(pixels, params, "patch_embed"), Tensor(params.enc_pos))


def embed_pixel_rows(pixel_rows: np.ndarray, params: ModelParams) -> Tensor:
    """patch_embed for a precomputed (n_patches, patch_dim) [0,1] pixel matrix."""
    if pixel_rows.shape != (params.config.n_patches, params.config.patch_dim):
        raise ShapeError(
            f"pixel matrix {pixel_rows.shape} does not match "
            f"({params.config.n_patches}, {params.config.patch_dim})"
        )
    return add(_linear(Tensor(pixel_rows), params, "patch_embed"), Tensor(params.enc_pos))


def full_plan(n_patches: int) -> MaskPlan:
    """Plan with every patch visible (used for fine-tuning and evaluation)."""
    return MaskPlan(visible=tuple(range(n_patches)), masked=(), ratio=0.0, policy="multifractal")


def encode(tokens: Tensor, plan: MaskPlan, params: ModelParams) -> Tensor:
    """Run the visible tokens (ascending patch index) through the encoder blocks."""
    config = params.config
    if plan.n_patches != tokens.shape[0]:
        raise InvalidArgumentError(
            f"plan covers {plan.n_patches} patches but {tokens.shape[0]} tokens were given"
        )
    x = gather_rows(tokens, plan.visible)
    for i in range(config.encoder_layers):
        x = _transformer_block(x, params, f"encoder.{i}", config.heads)
    return _affine_norm(x, params, "encoder.norm")


def decode(latent: Tensor, plan: MaskPlan, params: ModelParams) -> Tensor:
    """Reconstruct pixels for every patch from the visible-token latent."""
    config = params.config
    if not params.has_decoder:
        raise InvalidArgumentError("model was built without a decoder")
    if latent.shape[0] != len(plan.visible):
        raise InvalidArgumentError(
            f"latent has {latent.shape[0]} tokens but the plan has {len(plan.visible)} visible patches"
        )
    x = _linear(latent, params, "decoder_embed")
    n_masked = len(plan.masked)
    if n_masked:
        ones = Tensor(np.ones((n_masked, 1), dtype=params.dtype))
        mask_rows = matmul(ones, reshape(params["mask_token"], (1, config.decoder_dim)))
        stacked = concat([x, mask_rows], axis=0)
    else:
        stacked = x
    # Row k of the decoder input must correspond to grid position k.
    row_of_position = np.empty(plan.n_patches, dtype=np.int64)
    row_of_position[list(plan.visible)] = np.arange(len(plan.visible))
    row_of_position[list(plan.masked)] = len(plan.visible) + np.arange(n_masked)
    seq = add(gather_rows(stacked, row_of_position), Tensor(params.dec_pos))
    for i in range(config.decoder_layers):
        seq = _transformer_block(seq, params, f"decoder.{i}", config.heads)
    seq = _affine_norm(seq, params, "decoder.norm")
    return _linear(seq, params, "recon_head")


def reconstruction_loss(
    pred: Tensor,
    image: ImageBuffer,
    grid: PatchGrid,
    plan: MaskPlan,
    normalize_targets: bool = False,
) -> Tensor:
    """Mean squared error over the masked patches only.

    With normalize_targets each target patch is standardized to zero mean and
    unit variance before comparison.
    """
    if not plan.masked:
        raise DegeneratePlanError("reconstruction loss needs at least one masked patch")
    targets = patch_pixels(image, grid, np.float64)
    return _masked_mse(pred, targets, plan, normalize_targets)


def _masked_mse(
    pred: Tensor, target_rows: np.ndarray, plan: MaskPlan, normalize_targets: bool
) -> Tensor:
    if pred.shape != target_rows.shape:
        raise ShapeError(f"prediction {pred.shape} does not match targets {target_rows.shape}")
    if not plan.masked:
        raise DegeneratePlanError("reconstruction loss needs at least one masked patch")
    masked = list(plan.masked)
    targets = target_rows[masked].astype(np.float64)
    if normalize_targets:
        mu = targets.mean(axis=1, keepdims=True)
        var = targets.var(axis=1, keepdims=True)
        targets = (targets - mu) / np.sqrt(var + 1e-6)
    return mse_loss(gather_rows(pred, masked), Tensor(targets.astype(pred.dtype)))


def pretrain_loss(
    image: ImageBuffer,
    grid: PatchGrid,
    plan: MaskPlan,
    params: ModelParams,
    normalize_targets: bool = False,
) -> Tensor:
    """Full masked-reconstruction loss for one image."""
    tokens = patch_embed(image, grid, params)
    latent = encode(tokens, plan, params)
    pred = decode(latent, plan, params)
    return reconstruction_loss(pred, image, grid, plan, normalize_targets)


def classify_tokens(tokens: Tensor, params: ModelParams) -> Tensor:
    """Encode the full token sequence, mean-pool, normalize, project to logits."""
    config = params.config
    if config.num_classes < 2 or "cls_head.weight" not in params:
        raise InvalidArgumentError("model is not configured for classification")
    latent = encode(tokens, full_plan(tokens.shape[0]), params)
    pooled = reshape(mean(latent, axis=0), (1, config.encoder_dim))
    normed = _affine_norm(pooled, params, "cls_norm")
    return reshape(_linear(normed, params, "cls_head"), (config.num_classes,))


def classify_forward(image: ImageBuffer, params: ModelParams) -> Tensor:
    """Logits for one image; no masking is applied during classification."""
    grid = partition_patches(image, params.config.patch_size)
    return classify_tokens(patch_embed(image, grid, params), params)
