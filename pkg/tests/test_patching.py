import numpy as np
import pytest

from momae.errors import InvalidArgumentError
from momae.patching import (
    extract,
    image_from_array,
    partition_patches,
    patch_matrix,
    to_luminance,
)


def test_luminance_gray_pixel_passes_through():
    img = image_from_array(np.full((2, 2, 3), 77, dtype=np.uint8))
    out = to_luminance(img)
    assert out.channels == 1
    assert (out.data == 77).all()


def test_luminance_identity_on_single_channel():
    img = image_from_array(np.arange(16, dtype=np.uint8).reshape(4, 4))
    out = to_luminance(img)
    assert out is img


def test_luminance_pure_red():
    img = image_from_array(np.array([[[255, 0, 0]]], dtype=np.uint8))
    assert to_luminance(img).data[0, 0, 0] == 76  # round(0.299 * 255)


def test_luminance_idempotent():
    rng = np.random.default_rng(8)
    img = image_from_array(rng.integers(0, 256, size=(6, 9, 3)).astype(np.uint8))
    once = to_luminance(img)
    twice = to_luminance(once)
    assert (once.data == twice.data).all()


def test_grid_224_by_16():
    img = image_from_array(np.zeros((224, 224), dtype=np.uint8))
    grid = partition_patches(img, 16)
    assert (grid.rows, grid.cols, grid.n_patches) == (14, 14, 196)


def test_grid_crops_residual_pixels():
    img = image_from_array(np.zeros((28, 28), dtype=np.uint8))
    grid = partition_patches(img, 16)
    assert grid.n_patches == 1


def test_grid_row_major_enumeration():
    img = image_from_array(np.zeros((32, 48), dtype=np.uint8))
    grid = partition_patches(img, 16)
    assert (grid.rows, grid.cols, grid.n_patches) == (2, 3, 6)
    assert grid.origin(4) == (16, 16)


def test_grid_rejects_oversized_patch():
    img = image_from_array(np.zeros((8, 8), dtype=np.uint8))
    with pytest.raises(InvalidArgumentError):
        partition_patches(img, 9)


def test_extract_origins_and_bounds():
    img = image_from_array(np.zeros((224, 224), dtype=np.uint8))
    grid = partition_patches(img, 16)
    assert extract(img, grid, 0).origin == (0, 0)
    assert extract(img, grid, grid.n_patches - 1).origin == (208, 208)
    with pytest.raises(IndexError):
        extract(img, grid, grid.n_patches)
    with pytest.raises(IndexError):
        extract(img, grid, -1)


def test_extract_copies_pixels():
    img = image_from_array(np.zeros((8, 8), dtype=np.uint8))
    grid = partition_patches(img, 4)
    patch = extract(img, grid, 0)
    patch.pixels[0, 0, 0] = 99
    assert img.data[0, 0, 0] == 0


def test_patches_disjointly_cover_cropped_region():
    rng = np.random.default_rng(2)
    img = image_from_array(rng.integers(0, 256, size=(20, 28)).astype(np.uint8))
    grid = partition_patches(img, 8)
    ownership = np.zeros((grid.rows * 8, grid.cols * 8), dtype=int)
    for k in range(grid.n_patches):
        r0, c0 = grid.origin(k)
        ownership[r0 : r0 + 8, c0 : c0 + 8] += 1
    assert (ownership == 1).all()


def test_reassembly_round_trip():
    rng = np.random.default_rng(4)
    img = image_from_array(rng.integers(0, 256, size=(24, 32, 3)).astype(np.uint8))
    grid = partition_patches(img, 8)
    rebuilt = np.zeros_like(img.data)
    for k in range(grid.n_patches):
        patch = extract(img, grid, k)
        r0, c0 = patch.origin
        rebuilt[r0 : r0 + 8, c0 : c0 + 8, :] = patch.pixels
    assert (rebuilt == img.data).all()


def test_patch_matrix_matches_extract():
    rng = np.random.default_rng(6)
    img = image_from_array(rng.integers(0, 256, size=(24, 16)).astype(np.uint8))
    grid = partition_patches(img, 8)
    mat = patch_matrix(img, grid)
    assert mat.shape == (6, 64)
    for k in range(grid.n_patches):
        assert (mat[k] == extract(img, grid, k).pixels.ravel()).all()
