"""Image buffers, grayscale conversion and the non-overlapping patch grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .mfcore import DEFAULT_LEVELS


@dataclass(frozen=True)
class ImageBuffer:
    """H x W x C raster of integer intensities in [0, levels]."""

    data: np.ndarray  # uint8, shape (height, width, channels)
    levels: int = DEFAULT_LEVELS

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise InvalidArgumentError(f"image data must be H x W x C, got shape {self.data.shape}")
        if self.data.dtype != np.uint8:
            raise InvalidArgumentError(f"image data must be uint8, got {self.data.dtype}")
        if self.channels not in (1, 3):
            raise InvalidArgumentError(f"channel count must be 1 or 3, got {self.channels}")
        if self.height < 1 or self.width < 1:
            raise InvalidArgumentError(f"image dimensions must be positive, got {self.data.shape}")
        if self.data.size and int(self.data.max()) > self.levels:
            raise InvalidArgumentError(
                f"intensity {int(self.data.max())} exceeds declared levels {self.levels}"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def image_from_array(arr: np.ndarray, levels: int = DEFAULT_LEVELS) -> ImageBuffer:
    """Wrap a (H, W) or (H, W, C) integer array as an ImageBuffer."""
    a = np.asarray(arr)
    if a.ndim == 2:
        a = a[:, :, np.newaxis]
    return ImageBuffer(data=np.ascontiguousarray(a, dtype=np.uint8), levels=levels)


@dataclass(frozen=True)
class PatchGrid:
    """Row-major grid of non-overlapping patch_size x patch_size patches.

    Residual right/bottom pixels that do not fill a whole patch are cropped,
    so n_patches = floor(H / patch_size) * floor(W / patch_size).
    """

    patch_size: int
    rows: int
    cols: int
    image_height: int
    image_width: int

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    def origin(self, k: int) -> tuple[int, int]:
        """Pixel offset (row, col) of patch k in the source image."""
        if not 0 <= k < self.n_patches:
            raise IndexError(f"patch index {k} out of range [0, {self.n_patches})")
        return (self.patch_size * (k // self.cols), self.patch_size * (k % self.cols))


@dataclass(frozen=True)
class Patch:
    index: int
    pixels: np.ndarray  # (patch_size, patch_size, channels), copied
    origin: tuple[int, int]


def to_luminance(image: ImageBuffer) -> ImageBuffer:
    """Reduce an RGB image to one channel with BT.601 weights; pass 1-channel through.

    Each pixel maps to round(0.299 R + 0.587 G + 0.114 B), round half up.
    """
    if image.channels == 1:
        return image
    rgb = image.data.astype(np.float64)
    y = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    y = np.clip(np.floor(y + 0.5), 0, image.levels).astype(np.uint8)
    return ImageBuffer(data=y[:, :, np.newaxis], levels=image.levels)


def partition_patches(image: ImageBuffer, patch_size: int) -> PatchGrid:
    """Partition an image into the row-major grid of patch_size-sized patches."""
    if patch_size < 1:
        raise InvalidArgumentError(f"patch size must be positive, got {patch_size}")
    if patch_size > min(image.height, image.width):
        raise InvalidArgumentError(
            f"patch size {patch_size} exceeds image extent "
            f"{image.height}x{image.width}"
        )
    return PatchGrid(
        patch_size=patch_size,
        rows=image.height // patch_size,
        cols=image.width // patch_size,
        image_height=image.height,
        image_width=image.width,
    )


def extract(image: ImageBuffer, grid: PatchGrid, k: int) -> Patch:
    """Copy out patch k of the grid."""
    r0, c0 = grid.origin(k)
    n = grid.patch_size
    pixels = image.data[r0 : r0 + n, c0 : c0 + n, :].copy()
    return Patch(index=k, pixels=pixels, origin=(r0, c0))


def patch_matrix(image: ImageBuffer, grid: PatchGrid) -> np.ndarray:
    """All patches flattened into an (n_patches, patch_size^2 * C) uint8 matrix.

    Row k holds the pixels of patch k in row-major order, matching extract().
    """
    n = grid.patch_size
    cropped = image.data[: grid.rows * n, : grid.cols * n, :]
    blocks = cropped.reshape(grid.rows, n, grid.cols, n, image.channels)
    blocks = blocks.transpose(0, 2, 1, 3, 4)  # (rows, cols, n, n, C)
    return np.ascontiguousarray(blocks.reshape(grid.n_patches, n * n * image.channels))
