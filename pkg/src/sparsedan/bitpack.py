"""Bit-packed {-1, 0, +1} layers and multiplier-free forward passes.

Each hidden unit keeps two bit masks over the visible units, one for +1
connections and one for -1 connections, packed little-endian into 64-bit
words (bit ``i`` of the mask is bit ``i % 64`` of word ``i // 64``).

Real-valued inputs are handled by gathering and adding the selected inputs
(``forward_real``); binary inputs by AND + popcount (``forward_binary``).
Neither path multiplies by a weight.
"""

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numerics import ContractError, sigmoid

WORD_BITS = 64
_CHUNK_ELEMS = 1 << 22


def n_words(n_bits):
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits):
    """Pack a 0/1 array along its last axis into uint64 words."""
    bits = np.asarray(bits)
    n = bits.shape[-1]
    pad = n_words(n) * WORD_BITS - n
    if pad:
        widths = [(0, 0)] * (bits.ndim - 1) + [(0, pad)]
        bits = np.pad(bits, widths)
    packed = np.packbits(bits.astype(bool), axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def unpack_bits(words, n_bits):
    words = np.ascontiguousarray(np.asarray(words, dtype="<u8"))
    as_bytes = words.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :n_bits]


@dataclass(frozen=True, eq=False)
class BitVector:
    length: int
    words: np.ndarray

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.uint64)
        if words.shape != (n_words(self.length),):
            raise ContractError(f"{words.shape} words cannot hold {self.length} bits")
        tail = self.length % WORD_BITS
        if tail and words.size and int(words[-1]) >> tail:
            raise ContractError("bits beyond length must be zero")
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits).ravel()
        if bits.size and not np.all((bits == 0) | (bits == 1)):
            raise ContractError("bit vector entries must be 0 or 1")
        return cls(bits.size, pack_bits(bits))

    def to_bits(self):
        return unpack_bits(self.words, self.length)

    def popcount(self):
        return int(np.bitwise_count(self.words).sum())

    def __eq__(self, other):
        return (
            isinstance(other, BitVector)
            and self.length == other.length
            and np.array_equal(self.words, other.words)
        )


@dataclass(frozen=True, eq=False)
class SparseBinaryLayer:
    n_visible: int
    n_hidden: int
    pos_mask: np.ndarray  # (n_hidden, n_words) uint64
    neg_mask: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        shape = (self.n_hidden, n_words(self.n_visible))
        pos = np.asarray(self.pos_mask, dtype=np.uint64).reshape(shape)
        neg = np.asarray(self.neg_mask, dtype=np.uint64).reshape(shape)
        bias = np.asarray(self.bias, dtype=np.float64)
        if bias.shape != (self.n_hidden,):
            raise ContractError(f"bias shape {bias.shape}, expected ({self.n_hidden},)")
        if np.any(pos & neg):
            raise ContractError("a connection cannot be both +1 and -1")
        tail = self.n_visible % WORD_BITS
        if tail and shape[1] and np.any((pos[:, -1] | neg[:, -1]) >> np.uint64(tail)):
            raise ContractError("mask bits beyond n_visible must be zero")
        object.__setattr__(self, "pos_mask", pos)
        object.__setattr__(self, "neg_mask", neg)
        object.__setattr__(self, "bias", bias)

    def in_degree(self):
        return np.bitwise_count(self.pos_mask).sum(axis=1) + np.bitwise_count(self.neg_mask).sum(axis=1)

    @property
    def reserved(self):
        return int(self.in_degree().sum())

    def mask_bytes(self):
        """Storage of both masks in bytes (n_words * 8 per mask per unit)."""
        return 2 * self.pos_mask.size * 8

    @cached_property
    def _index_lists(self):
        pos_bits = unpack_bits(self.pos_mask, self.n_visible).astype(bool)
        neg_bits = unpack_bits(self.neg_mask, self.n_visible).astype(bool)
        return _segments(pos_bits), _segments(neg_bits)


def _segments(bits):
    # (n_hidden, n_visible) bool -> flat visible indices + per-unit start offsets
    unit, visible = np.nonzero(bits)
    counts = bits.sum(axis=1)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.intp)
    return visible.astype(np.intp), starts, counts


def pack_layer(W, bias):
    """Pack an ``(n_visible, n_hidden)`` matrix over {-1, 0, +1}."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ContractError("W must be 2-D")
    if not np.all((W == 0) | (W == 1) | (W == -1)):
        raise ContractError("weights must be -1, 0 or +1")
    n, d = W.shape
    return SparseBinaryLayer(n, d, pack_bits(W.T == 1), pack_bits(W.T == -1), bias)


def unpack_layer(layer):
    """Dense ternary ``(n_visible, n_hidden)`` matrix of a packed layer."""
    pos = unpack_bits(layer.pos_mask, layer.n_visible).astype(np.float64)
    neg = unpack_bits(layer.neg_mask, layer.n_visible).astype(np.float64)
    return (pos - neg).T


def _segment_sums(V, segments):
    idx, starts, counts = segments
    m = V.shape[0]
    out = np.zeros((m, counts.size))
    if idx.size == 0:
        return out
    step = max(1, _CHUNK_ELEMS // idx.size)
    for lo in range(0, m, step):
        gathered = V[lo:lo + step][:, idx]
        gathered = np.concatenate([gathered, np.zeros((gathered.shape[0], 1))], axis=1)
        sums = np.add.reduceat(gathered, starts, axis=1)
        sums[:, counts == 0] = 0.0
        out[lo:lo + step] = sums
    return out


def forward_real(layer, v):
    """sigmoid(sum of +1 inputs - sum of -1 inputs + bias) per hidden unit.

    ``v`` is one real vector or a batch of rows.
    """
    V = np.asarray(v, dtype=np.float64)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    if V.ndim != 2 or V.shape[1] != layer.n_visible:
        raise ContractError(f"input width {V.shape[-1]} != n_visible {layer.n_visible}")
    pos, neg = layer._index_lists
    act = sigmoid(_segment_sums(V, pos) - _segment_sums(V, neg) + layer.bias)
    return act[0] if single else act


def popcount_dot(words, pos_mask, neg_mask):
    """popcount(v & pos) - popcount(v & neg) for packed batch rows ``words``."""
    m = words.shape[0]
    d, w = pos_mask.shape
    z = np.empty((m, d), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, d * w))
    for lo in range(0, m, step):
        block = words[lo:lo + step, None, :]
        plus = np.bitwise_count(block & pos_mask[None]).sum(axis=2, dtype=np.int64)
        minus = np.bitwise_count(block & neg_mask[None]).sum(axis=2, dtype=np.int64)
        z[lo:lo + step] = plus - minus
    return z


def forward_binary(layer, v):
    """Popcount pass for a :class:`BitVector` input.

    Returns ``(z, h)`` with integer pre-activations ``z`` (bias excluded) and
    the output :class:`BitVector`, where bit ``j`` is set iff ``z_j + b_j > 0``.
    """
    if not isinstance(v, BitVector) or v.length != layer.n_visible:
        raise ContractError(f"expected a BitVector of length {layer.n_visible}")
    z = popcount_dot(v.words[None, :], layer.pos_mask, layer.neg_mask)[0]
    return z, BitVector.from_bits((z + layer.bias > 0).astype(np.uint8))


def forward_binary_batch(layer, words):
    """Batch form of :func:`forward_binary` on packed rows; returns ``(z, out_words)``."""
    words = np.asarray(words, dtype=np.uint64)
    if words.ndim != 2 or words.shape[1] != n_words(layer.n_visible):
        raise ContractError("packed input does not match layer width")
    z = popcount_dot(words, layer.pos_mask, layer.neg_mask)
    return z, pack_bits(z + layer.bias > 0)


class FeatureMode(str, enum.Enum):
    REAL = "real"
    BINARY = "binary"


def binarize_input(v, threshold=0.5):
    return (np.asarray(v, dtype=np.float64) > threshold).astype(np.uint8)


def check_chain(layers):
    for t, (a, b) in enumerate(zip(layers, layers[1:])):
        if a.n_hidden != b.n_visible:
            raise ContractError(f"layer {t} outputs {a.n_hidden} but layer {t + 1} takes {b.n_visible}")


def run_network(layers, v, mode=FeatureMode.REAL):
    """Feed ``v`` (vector or batch) through packed layers.

    REAL mode chains :func:`forward_real` and returns probabilities. BINARY
    mode thresholds the input at 0.5, chains the popcount pass and returns the
    final 0/1 bits as a uint8 array.
    """
    mode = FeatureMode(mode)
    check_chain(layers)
    V = np.asarray(v, dtype=np.float64)
    if not layers:
        return V
    if V.shape[-1] != layers[0].n_visible:
        raise ContractError(f"input width {V.shape[-1]} != {layers[0].n_visible}")
    if mode is FeatureMode.REAL:
        for layer in layers:
            V = forward_real(layer, V)
        return V
    single = V.ndim == 1
    words = pack_bits(binarize_input(np.atleast_2d(V)))
    for layer in layers:
        _, words = forward_binary_batch(layer, words)
    bits = unpack_bits(words, layers[-1].n_hidden)
    return bits[0] if single else bits
