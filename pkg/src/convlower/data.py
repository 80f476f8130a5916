"""Dataset ingestion: IDX image files, deterministic sampling, synthetic data.

The IDX image layout (big-endian): 4-byte magic 0x00000803, then three
32-bit counts (images, rows, cols), then rows*cols unsigned bytes per image
in row-major order. Pixel bytes are scaled to [0, 1] by dividing by 255 so
losses stay comparable across data sources. Gzipped files are detected by
their two-byte signature and decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .tensors import Tensor4

__all__ = [
    "IdxFormatError",
    "IDX_IMAGE_MAGIC",
    "load_idx_images",
    "write_idx_images",
    "sample_without_replacement",
    "synthetic_images",
]

IDX_IMAGE_MAGIC = 0x00000803
_MAX_AXIS = 1 << 31


class IdxFormatError(ValueError):
    """Raised when a file does not follow the IDX image layout."""


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        rest = fh.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def load_idx_images(path) -> Tensor4:
    """Parse an IDX image file into a (n, rows, cols, 1) tensor in [0, 1]."""
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise IdxFormatError(f"{path}: too short for an IDX image header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{path}: unexpected magic 0x{magic:08x} (want 0x{IDX_IMAGE_MAGIC:08x})"
        )
    for name, value in (("images", n), ("rows", rows), ("cols", cols)):
        if value == 0 or value >= _MAX_AXIS:
            raise IdxFormatError(f"{path}: {name} dimension {value} out of range")
    expected = n * rows * cols
    payload = raw[16:]
    if len(payload) < expected:
        raise IdxFormatError(
            f"{path}: truncated payload, need {expected} bytes but found {len(payload)}"
        )
    if len(payload) > expected:
        raise IdxFormatError(
            f"{path}: {len(payload) - expected} trailing bytes after pixel data"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols, 1)
    return Tensor4._wrap(pixels.astype(np.float64) / 255.0)


def write_idx_images(path, pixels: np.ndarray) -> None:
    """Write uint8 images (n, rows, cols) as an IDX file; test-fixture support."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.dtype != np.uint8:
        raise ValueError("write_idx_images needs a uint8 array of shape (n, rows, cols)")
    n, rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())


def sample_without_replacement(t: Tensor4, n: int, seed: int) -> Tensor4:
    """Pick n distinct images, deterministically for a given seed."""
    if n > t.b:
        raise ValueError(f"cannot sample {n} images from a set of {t.b}")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(t.b)[:n]
    return Tensor4._wrap(np.ascontiguousarray(t.data[idx]))


def synthetic_images(n: int, h: int, w: int, seed: int) -> Tensor4:
    """Uniform [0, 1) single-channel images; offline stand-in for real data."""
    rng = np.random.default_rng(seed)
    return Tensor4._wrap(rng.random((n, h, w, 1)))
