"""Bit-exact file formats: MOMD dataset containers, PGM/PPM images, checkpoints.

All multi-byte integers are little-endian; checkpoint payloads are IEEE-754
binary32 little-endian. Every format round-trips byte for byte.

MOMD layout: magic ``MOMD`` (4) | version=1 (1) | count u32 (4) | H u16 (2) |
W u16 (2) | C u8 (1) | num_classes u16 (2) | label_width u8 (1) |
count * H * W * C image bytes | count * label_width label bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointCorruptError,
    DataError,
    FormatError,
    InvalidArgumentError,
    LengthError,
)
from .patching import ImageBuffer

MAGIC = b"MOMD"
VERSION = 1
HEADER = struct.Struct("<4sBIHHBHB")  # 17 bytes


@dataclass
class DatasetContainer:
    """In-memory dataset: count x H x W x C uint8 images plus integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise InvalidArgumentError(
                f"images must be (count, H, W, C), got shape {self.images.shape}"
            )
        if self.labels.shape != (self.images.shape[0],):
            raise InvalidArgumentError(
                f"got {self.labels.shape[0] if self.labels.ndim else 0} labels "
                f"for {self.images.shape[0]} images"
            )
        if self.images.shape[3] not in (1, 3):
            raise InvalidArgumentError(f"channel count must be 1 or 3, got {self.images.shape[3]}")
        if self.num_classes < 1 or self.num_classes > 0xFFFF:
            raise InvalidArgumentError(f"num_classes must be in [1, 65535], got {self.num_classes}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def shape_hwc(self) -> tuple[int, int, int]:
        return self.images.shape[1], self.images.shape[2], self.images.shape[3]

    def image(self, i: int) -> ImageBuffer:
        return ImageBuffer(data=self.images[i].copy(), levels=255)


def save_container(dataset: DatasetContainer, path: str | Path) -> None:
    """Write a dataset in the MOMD byte layout; output is deterministic."""
    count = len(dataset)
    h, w, c = dataset.shape_hwc
    if h > 0xFFFF or w > 0xFFFF:
        raise InvalidArgumentError(f"image extent {h}x{w} exceeds the u16 header fields")
    label_width = 1 if dataset.num_classes <= 0x100 else 2
    header = HEADER.pack(MAGIC, VERSION, count, h, w, c, dataset.num_classes, label_width)
    label_dtype = np.dtype("<u1") if label_width == 1 else np.dtype("<u2")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dataset.images.tobytes())
        fh.write(dataset.labels.astype(label_dtype).tobytes())


def load_container(path: str | Path) -> DatasetContainer:
    """Parse a MOMD file, validating magic, version, lengths and label range."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise LengthError(f"{path}: file shorter than the 17-byte header")
    magic, version, count, h, w, c, num_classes, label_width = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    if c not in (1, 3):
        raise FormatError(f"{path}: channel count must be 1 or 3, got {c}")
    if label_width not in (1, 2):
        raise FormatError(f"{path}: label width must be 1 or 2, got {label_width}")
    image_bytes = count * h * w * c
    expected = HEADER.size + image_bytes + count * label_width
    if len(blob) != expected:
        raise LengthError(f"{path}: expected {expected} bytes from header arithmetic, found {len(blob)}")
    images = np.frombuffer(blob, dtype=np.uint8, count=image_bytes, offset=HEADER.size)
    images = images.reshape(count, h, w, c).copy()
    label_dtype = np.dtype("<u1") if label_width == 1 else np.dtype("<u2")
    labels = np.frombuffer(blob, dtype=label_dtype, count=count, offset=HEADER.size + image_bytes)
    labels = labels.astype(np.int64)
    if count and labels.max() >= num_classes:
        raise DataError(f"{path}: label {int(labels.max())} >= num_classes {num_classes}")
    return DatasetContainer(images=images, labels=labels, num_classes=num_classes)


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------


def _read_header_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited token, skipping ``#`` comment lines."""
    n = len(blob)
    while pos < n:
        ch = blob[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < n and blob[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not blob[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated image header")
    return blob[start:pos], pos


def load_pgm_ppm(path: str | Path) -> ImageBuffer:
    """Read a binary PGM (P5, one channel) or PPM (P6, three channels) image."""
    blob = Path(path).read_bytes()
    try:
        magic, pos = _read_header_token(blob, 0)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"{path}: unsupported magic {magic!r}, expected P5 or P6")
        fields = []
        for _ in range(3):
            token, pos = _read_header_token(blob, pos)
            fields.append(int(token))
    except (FormatError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise FormatError(f"{path}: maxval {maxval} outside (0, 255]")
    channels = 1 if magic == b"P5" else 3
    pos += 1  # exactly one whitespace byte separates header and raster
    expected = width * height * channels
    raster = blob[pos : pos + expected]
    if len(raster) != expected:
        raise LengthError(f"{path}: expected {expected} raster bytes, found {len(raster)}")
    data = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels).copy()
    return ImageBuffer(data=data, levels=maxval)


def save_pgm_ppm(image: ImageBuffer, path: str | Path) -> None:
    """Write an ImageBuffer as binary PGM (1 channel) or PPM (3 channels)."""
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n%d\n" % (magic, image.width, image.height, image.levels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(image.data.tobytes())


def write_heatmap(values: np.ndarray, path: str | Path) -> None:
    """Min-max normalize a rows x cols value grid to [0, 255] and write a PGM.

    A constant grid maps to mid-gray 128.
    """
    grid = np.asarray(values, dtype=np.float64)
    if grid.ndim != 2:
        raise InvalidArgumentError(f"heatmap values must be 2-D, got shape {grid.shape}")
    if not np.isfinite(grid).all():
        raise InvalidArgumentError("heatmap values must be finite")
    lo, hi = float(grid.min()), float(grid.max())
    if hi == lo:
        pixels = np.full(grid.shape, 128, dtype=np.uint8)
    else:
        pixels = np.floor((grid - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    save_pgm_ppm(ImageBuffer(data=pixels[:, :, np.newaxis], levels=255), path)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """Model parameters plus the metadata they were trained under."""

    metadata: dict
    arrays: dict[str, np.ndarray]


def save_checkpoint(arrays: dict[str, np.ndarray], metadata: dict, path: str | Path) -> None:
    """Write ``u32 metadata length | UTF-8 JSON | float32 payload in manifest order``."""
    manifest = [[name, list(arr.shape)] for name, arr in arrays.items()]
    meta = dict(metadata)
    meta["manifest"] = manifest
    meta_bytes = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        for _, arr in arrays.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint, validating the manifest against the payload length."""
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise CheckpointCorruptError(f"{path}: missing metadata length prefix")
    (meta_len,) = struct.unpack_from("<I", blob)
    if len(blob) < 4 + meta_len:
        raise CheckpointCorruptError(f"{path}: metadata truncated")
    try:
        metadata = json.loads(blob[4 : 4 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: unreadable metadata ({exc})") from None
    manifest = metadata.get("manifest")
    if not isinstance(manifest, list):
        raise CheckpointCorruptError(f"{path}: metadata lacks a manifest")
    total = sum(int(np.prod(shape, dtype=np.int64)) for _, shape in manifest)
    payload = blob[4 + meta_len :]
    if len(payload) != total * 4:
        raise CheckpointCorruptError(
            f"{path}: payload is {len(payload)} bytes, manifest implies {total * 4}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in manifest:
        n = int(np.prod(shape, dtype=np.int64))
        flat = np.frombuffer(payload, dtype="<f4", count=n, offset=offset * 4)
        arrays[name] = flat.reshape([int(d) for d in shape]).copy()
        offset += n
    return Checkpoint(metadata=metadata, arrays=arrays)
