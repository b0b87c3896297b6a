"""DANM binary model files.

Layout, all integers little-endian::

    "DANM"            4 bytes magic
    version           u16 (currently 1)
    layer count       u16
    per layer:
        kind          u8   0 dense real, 1 sparse-binary,
                           2 sparse-binary with binary features, 3 thresholded real
        n, d          u32, u32  (visible, hidden)
        payload
    crc32             u32 over every preceding byte

Real payloads (kinds 0 and 3): u8 visible kind (0 Bernoulli, 1 Gaussian), W as
f32[n*d] row-major, b as f32[d], c as f32[n].

Sparse-binary payloads (kinds 1 and 2): bias f32[d], then all positive masks
u64[d * ceil(n/64)] (unit-major), then all negative masks in the same order.
"""

import struct
import zlib
from pathlib import Path

import numpy as np

from .bitpack import SparseBinaryLayer, n_words
from .numerics import ContractError
from .quantize import QuantizedModel, QuantMode
from .rbm import RbmParams, VisibleKind
from .stack import DanModel

MAGIC = b"DANM"
VERSION = 1
HEADER = struct.Struct("<4sHH")
LAYER_HEADER = struct.Struct("<BII")
CRC = struct.Struct("<I")

KIND_DENSE = 0
KIND_BINARY = 1
KIND_BINARY_FEATURES = 2
KIND_THRESHOLDED = 3

_VISIBLE_CODES = {VisibleKind.BERNOULLI: 0, VisibleKind.GAUSSIAN: 1}


class ModelFileError(Exception):
    pass


class BadMagicError(ModelFileError):
    pass


class UnknownVersionError(ModelFileError):
    pass


class CrcMismatchError(ModelFileError):
    pass


class TruncatedModelError(ModelFileError):
    pass


class ModelFormatError(ModelFileError):
    pass


def _layer_kind(model):
    if isinstance(model, DanModel):
        return KIND_DENSE
    return {
        QuantMode.SPARSE_REAL: KIND_THRESHOLDED,
        QuantMode.SPARSE_BINARY: KIND_BINARY,
        QuantMode.SPARSE_BINARY_FEATURES: KIND_BINARY_FEATURES,
    }[model.mode]


def _f32(a):
    return np.asarray(a, dtype="<f4").tobytes()


def serialize(model):
    """Encode a dense or quantised stack as DANM bytes (CRC included)."""
    kind = _layer_kind(model)
    parts = [HEADER.pack(MAGIC, VERSION, len(model.layers))]
    for layer in model.layers:
        if kind in (KIND_DENSE, KIND_THRESHOLDED):
            n, d = layer.W.shape
            parts.append(LAYER_HEADER.pack(kind, n, d))
            parts.append(bytes([_VISIBLE_CODES[layer.visible_kind]]))
            parts += [_f32(layer.W), _f32(layer.b), _f32(layer.c)]
        else:
            parts.append(LAYER_HEADER.pack(kind, layer.n_visible, layer.n_hidden))
            parts.append(_f32(layer.bias))
            parts.append(np.asarray(layer.pos_mask, dtype="<u8").tobytes())
            parts.append(np.asarray(layer.neg_mask, dtype="<u8").tobytes())
    body = b"".join(parts)
    return body + CRC.pack(zlib.crc32(body))


def save_model(model, path):
    Path(path).write_bytes(serialize(model))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, size):
        if self.pos + size > len(self.data):
            raise TruncatedModelError(
                f"need {size} bytes at offset {self.pos}, file body has {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()


def deserialize(data):
    """Decode DANM bytes.

    Args:
        data: the complete file contents.

    Returns:
        A :class:`DanModel` for dense files, otherwise a :class:`QuantizedModel`
        (whose ``thresholds`` are not stored and come back empty).

    Raises:
        ModelFileError: one of its subclasses, by failure kind. The checksum
            is verified before any layer is parsed.
    """
    if len(data) < HEADER.size + CRC.size:
        raise TruncatedModelError(f"file has {len(data)} bytes, too short for a model")
    magic, version, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"magic {magic!r} is not {MAGIC!r}")
    if version != VERSION:
        raise UnknownVersionError(f"format version {version} is not supported")
    body, (stored,) = data[:-CRC.size], CRC.unpack(data[-CRC.size:])
    if zlib.crc32(body) != stored:
        raise CrcMismatchError(f"checksum {zlib.crc32(body):08x} != stored {stored:08x}")
    try:
        return _parse(body, count)
    except ContractError as exc:
        raise ModelFormatError(str(exc)) from exc


def _parse(body, count):
    reader = _Reader(body)
    reader.take(HEADER.size)
    layers = []
    kinds = set()
    for _ in range(count):
        kind, n, d = LAYER_HEADER.unpack(reader.take(LAYER_HEADER.size))
        kinds.add(kind)
        if kind in (KIND_DENSE, KIND_THRESHOLDED):
            (vk,) = reader.take(1)
            if vk not in (0, 1):
                raise ModelFormatError(f"unknown visible kind {vk}")
            W = reader.array("<f4", n * d).astype(np.float64).reshape(n, d)
            b = reader.array("<f4", d).astype(np.float64)
            c = reader.array("<f4", n).astype(np.float64)
            kind_enum = VisibleKind.BERNOULLI if vk == 0 else VisibleKind.GAUSSIAN
            layers.append(RbmParams(W, b, c, kind_enum))
        elif kind in (KIND_BINARY, KIND_BINARY_FEATURES):
            w = n_words(n)
            bias = reader.array("<f4", d).astype(np.float64)
            pos = reader.array("<u8", d * w).astype(np.uint64).reshape(d, w)
            neg = reader.array("<u8", d * w).astype(np.uint64).reshape(d, w)
            layers.append(SparseBinaryLayer(n, d, pos, neg, bias))
        else:
            raise ModelFormatError(f"unknown layer kind {kind}")
    if reader.pos != len(body):
        raise ModelFormatError(f"{len(body) - reader.pos} trailing bytes after the last layer")
    if len(kinds) > 1:
        raise ModelFormatError(f"mixed layer kinds {sorted(kinds)}")
    kind = kinds.pop() if kinds else KIND_DENSE
    if kind == KIND_DENSE:
        return DanModel(layers)
    mode = {
        KIND_THRESHOLDED: QuantMode.SPARSE_REAL,
        KIND_BINARY: QuantMode.SPARSE_BINARY,
        KIND_BINARY_FEATURES: QuantMode.SPARSE_BINARY_FEATURES,
    }[kind]
    return QuantizedModel(mode, layers, [], 0.5 if kind == KIND_BINARY_FEATURES else None)


def load_model(path):
    return deserialize(Path(path).read_bytes())
