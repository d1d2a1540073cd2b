import numpy as np
import pytest

from momae.dataio import (
    DatasetContainer,
    load_checkpoint,
    load_container,
    load_pgm_ppm,
    save_checkpoint,
    save_container,
    save_pgm_ppm,
    write_heatmap,
)
from momae.errors import (
    CheckpointCorruptError,
    DataError,
    FormatError,
    LengthError,
)
from momae.patching import ImageBuffer


def make_dataset(count=10, h=6, w=5, c=1, num_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    return DatasetContainer(
        images=rng.integers(0, 256, size=(count, h, w, c)).astype(np.uint8),
        labels=rng.integers(0, num_classes, size=count),
        num_classes=num_classes,
    )


# ---------------------------------------------------------------------------
# MOMD container
# ---------------------------------------------------------------------------


def test_container_hand_written_single_image(tmp_path):
    pixels = bytes([10, 20, 30, 40])
    blob = b"MOMD" + bytes([1]) + (1).to_bytes(4, "little")
    blob += (2).to_bytes(2, "little") + (2).to_bytes(2, "little") + bytes([1])
    blob += (2).to_bytes(2, "little") + bytes([1]) + pixels + bytes([0])
    path = tmp_path / "one.momd"
    path.write_bytes(blob)
    ds = load_container(path)
    assert len(ds) == 1
    assert ds.images[0, :, :, 0].tolist() == [[10, 20], [30, 40]]
    assert ds.labels.tolist() == [0]
    assert ds.num_classes == 2


def test_container_bad_magic(tmp_path):
    path = tmp_path / "bad.momd"
    path.write_bytes(b"XXXX" + bytes(13))
    with pytest.raises(FormatError):
        load_container(path)


def test_container_truncation(tmp_path):
    ds = make_dataset()
    path = tmp_path / "t.momd"
    save_container(ds, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-3])
    with pytest.raises(LengthError):
        load_container(path)


def test_container_round_trip_bit_identical(tmp_path):
    ds = make_dataset(count=10, c=3, seed=5)
    path = tmp_path / "rt.momd"
    save_container(ds, path)
    back = load_container(path)
    assert (back.images == ds.images).all()
    assert (back.labels == ds.labels).all()
    assert back.num_classes == ds.num_classes
    save_container(back, tmp_path / "rt2.momd")
    assert (tmp_path / "rt2.momd").read_bytes() == path.read_bytes()


def test_container_empty_dataset_is_header_only(tmp_path):
    ds = DatasetContainer(
        images=np.zeros((0, 4, 4, 1), dtype=np.uint8),
        labels=np.zeros(0, dtype=np.int64),
        num_classes=2,
    )
    path = tmp_path / "empty.momd"
    save_container(ds, path)
    assert path.stat().st_size == 17
    assert len(load_container(path)) == 0


def test_container_payload_arithmetic(tmp_path):
    ds = DatasetContainer(
        images=np.zeros((1, 224, 224, 3), dtype=np.uint8),
        labels=np.zeros(1, dtype=np.int64),
        num_classes=2,
    )
    path = tmp_path / "big.momd"
    save_container(ds, path)
    assert path.stat().st_size == 17 + 150_528 + 1


def test_container_label_range_enforced(tmp_path):
    ds = make_dataset()
    path = tmp_path / "badlabel.momd"
    save_container(ds, path)
    blob = bytearray(path.read_bytes())
    blob[-1] = 250  # >= num_classes
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError):
        load_container(path)


def test_container_wide_labels(tmp_path):
    ds = make_dataset(num_classes=1000, seed=9)
    path = tmp_path / "wide.momd"
    save_container(ds, path)
    back = load_container(path)
    assert (back.labels == ds.labels).all()
    assert path.stat().st_size == 17 + ds.images.size + 2 * len(ds)


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------


def test_pgm_minimal(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5 2 2 255\n" + bytes([0, 64, 128, 255]))
    img = load_pgm_ppm(path)
    assert (img.height, img.width, img.channels) == (2, 2, 1)
    assert img.levels == 255
    assert img.data[:, :, 0].tolist() == [[0, 64], [128, 255]]


def test_pgm_comments_ignored(tmp_path):
    plain = tmp_path / "plain.pgm"
    commented = tmp_path / "commented.pgm"
    plain.write_bytes(b"P5 2 2 255\n" + bytes([1, 2, 3, 4]))
    commented.write_bytes(b"P5\n# a comment\n2 # inline\n2\n# another\n255\n" + bytes([1, 2, 3, 4]))
    assert (load_pgm_ppm(plain).data == load_pgm_ppm(commented).data).all()


def test_ppm_three_channels(tmp_path):
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6 1 2 255\n" + bytes([255, 0, 0, 0, 255, 0]))
    img = load_pgm_ppm(path)
    assert img.channels == 3
    assert img.data[0, 0].tolist() == [255, 0, 0]


def test_pgm_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(3)
    img = ImageBuffer(data=rng.integers(0, 256, size=(7, 9, 1)).astype(np.uint8))
    path = tmp_path / "rt.pgm"
    save_pgm_ppm(img, path)
    back = load_pgm_ppm(path)
    assert (back.data == img.data).all()
    save_pgm_ppm(back, tmp_path / "rt2.pgm")
    assert (tmp_path / "rt2.pgm").read_bytes() == path.read_bytes()


def test_pgm_rejects_bad_magic_and_maxval(tmp_path):
    p1 = tmp_path / "bad1.pgm"
    p1.write_bytes(b"P3 1 1 255\n0")
    with pytest.raises(FormatError):
        load_pgm_ppm(p1)
    p2 = tmp_path / "bad2.pgm"
    p2.write_bytes(b"P5 1 1 65535\n\0\0")
    with pytest.raises(FormatError):
        load_pgm_ppm(p2)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    arrays = {
        "w1": rng.normal(size=(3, 4)).astype(np.float32),
        "b1": rng.normal(size=4).astype(np.float32),
    }
    path = tmp_path / "c.ckpt"
    save_checkpoint(arrays, {"stage": "pretrain", "seed": 7}, path)
    ckpt = load_checkpoint(path)
    assert ckpt.metadata["stage"] == "pretrain"
    assert ckpt.metadata["seed"] == 7
    for name in arrays:
        assert (ckpt.arrays[name] == arrays[name]).all()


def test_checkpoint_truncated_payload(tmp_path):
    arrays = {"w": np.ones((2, 2), dtype=np.float32)}
    path = tmp_path / "c.ckpt"
    save_checkpoint(arrays, {}, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(CheckpointCorruptError):
        load_checkpoint(path)


def test_checkpoint_deterministic_bytes(tmp_path):
    arrays = {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(arrays, {"seed": 1}, a)
    save_checkpoint(arrays, {"seed": 1}, b)
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_incompatible_shapes_detected(tmp_path):
    from momae.errors import CheckpointIncompatibleError
    from momae.mae import ViTConfig, init_params

    config = ViTConfig(image_height=8, image_width=8, patch_size=4, encoder_dim=8,
                       decoder_dim=8, encoder_layers=1, decoder_layers=1, heads=2)
    params = init_params(config, seed=0)
    path = tmp_path / "p.ckpt"
    save_checkpoint(params.arrays(), {"stage": "pretrain"}, path)
    bigger = ViTConfig(image_height=8, image_width=8, patch_size=4, encoder_dim=16,
                       decoder_dim=8, encoder_layers=1, decoder_layers=1, heads=2)
    target = init_params(bigger, seed=0)
    with pytest.raises(CheckpointIncompatibleError):
        target.load_arrays(load_checkpoint(path).arrays)


# ---------------------------------------------------------------------------
# heatmaps
# ---------------------------------------------------------------------------


def test_heatmap_constant_is_mid_gray(tmp_path):
    path = tmp_path / "h.pgm"
    write_heatmap(np.full((3, 4), 2.5), path)
    img = load_pgm_ppm(path)
    assert (img.data == 128).all()


def test_heatmap_two_values_hit_extremes(tmp_path):
    path = tmp_path / "h.pgm"
    write_heatmap(np.array([[1.0, 5.0], [5.0, 1.0]]), path)
    img = load_pgm_ppm(path)
    assert sorted(np.unique(img.data).tolist()) == [0, 255]


def test_heatmap_preserves_rank_order(tmp_path):
    rng = np.random.default_rng(4)
    values = rng.normal(size=(4, 5))
    p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
    write_heatmap(values, p1)
    write_heatmap(np.exp(values * 2), p2)  # strictly increasing transform
    a = load_pgm_ppm(p1).data.ravel().astype(float)
    b = load_pgm_ppm(p2).data.ravel().astype(float)
    order_a = np.argsort(values.ravel(), kind="stable")
    assert (np.diff(a[order_a]) >= 0).all()
    assert (np.diff(b[order_a]) >= 0).all()
