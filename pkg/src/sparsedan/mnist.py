"""MNIST IDX (ubyte) reader and seeded subsampling.

IDX headers are big-endian: a 4-byte magic (0x00000803 for images,
0x00000801 for labels), then one 4-byte count per dimension, then raw bytes.
"""

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import DomainError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


class IdxError(Exception):
    """Malformed IDX input. ``code`` distinguishes the failure."""

    BAD_MAGIC = "bad-magic"
    TRUNCATED = "truncated"
    COUNT_MISMATCH = "count-mismatch"

    def __init__(self, code, message):
        super().__init__(f"[{code}] {message}")
        self.code = code


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray  # (N, 784) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    source_hash: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DomainError("images and labels differ in length")

    def __len__(self):
        return len(self.labels)


def _read_idx(path, magic, ndim):
    raw = Path(path).read_bytes()
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxError(IdxError.TRUNCATED, f"{path}: header needs {header} bytes, have {len(raw)}")
    (found,) = struct.unpack(">i", raw[:4])
    if found != magic:
        raise IdxError(IdxError.BAD_MAGIC, f"{path}: magic {found}, expected {magic}")
    dims = struct.unpack(">" + "i" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise IdxError(IdxError.TRUNCATED, f"{path}: payload {len(raw) - header} < {size} bytes")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)
    return data, hashlib.sha256(raw).hexdigest()


def load_idx(images_path, labels_path):
    """Load an image/label IDX pair; pixels are scaled to ``byte / 255``."""
    pixels, h_img = _read_idx(images_path, IMAGE_MAGIC, 3)
    labels, h_lab = _read_idx(labels_path, LABEL_MAGIC, 1)
    if pixels.shape[0] != labels.shape[0]:
        raise IdxError(
            IdxError.COUNT_MISMATCH,
            f"{pixels.shape[0]} images but {labels.shape[0]} labels",
        )
    images = pixels.reshape(pixels.shape[0], -1).astype(np.float64) / 255.0
    digest = hashlib.sha256((h_img + h_lab).encode()).hexdigest()[:16]
    return Dataset(images, labels.astype(np.int64), digest)


def default_data_dir():
    return os.environ.get("DAN_DATA_DIR")


def load_split(data_dir, split="train"):
    """Load the standard ``train`` or ``test`` split from ``data_dir``."""
    names = TRAIN_FILES if split == "train" else TEST_FILES
    data_dir = Path(data_dir)
    return load_idx(data_dir / names[0], data_dir / names[1])


def subsample(rng, ds, k):
    """Uniform sample of ``k`` items without replacement."""
    if not 0 <= k <= len(ds):
        raise DomainError(f"cannot draw {k} items from a dataset of {len(ds)}")
    idx = rng.permutation(len(ds))[:k]
    return Dataset(ds.images[idx], ds.labels[idx], f"{ds.source_hash}:{rng.seed}:{k}")
