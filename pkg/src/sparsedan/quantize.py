"""Threshold, sign-binarise and account for the weights of a trained stack.

Three deployable variants are produced from a real-valued stack:

* ``SPARSE_REAL``: weights with ``|w| <= u`` dropped, the rest kept as reals.
* ``SPARSE_BINARY``: surviving weights replaced by their sign, packed as bits.
* ``SPARSE_BINARY_FEATURES``: as above, and every hidden layer emits 0/1
  features thresholded at probability 0.5.

Biases are never quantised.
"""

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bitpack import FeatureMode, SparseBinaryLayer, pack_layer, run_network, unpack_layer
from .numerics import ContractError, DomainError
from .rbm import RbmParams
from .stack import DanModel, extract_features

REAL_BYTES = 4
DEFAULT_THRESHOLD = 0.1


class QuantMode(str, enum.Enum):
    SPARSE_REAL = "s"
    SPARSE_BINARY = "b"
    SPARSE_BINARY_FEATURES = "B"

    @property
    def label(self):
        return {"s": "DAN_s", "b": "DAN_b", "B": "DAN_B"}[self.value]


def _abs_values(W):
    return np.abs(np.asarray(W, dtype=np.float64)).ravel()


def sigma(W, u):
    """Fraction of weights with ``|w| >= u``."""
    if u < 0:
        raise DomainError("threshold must be >= 0")
    a = _abs_values(W)
    if a.size == 0:
        return 0.0
    return float(np.count_nonzero(a >= u)) / a.size


def threshold_for_sigma(W, target):
    """Threshold ``u`` that keeps at most ``target`` of the weights.

    The returned ``u`` lies strictly between the magnitude of the last weight
    dropped and the first one kept, so ``sigma(W, u)`` and :func:`sparsify`
    agree on which weights survive. Ties at the cut are all dropped.
    """
    if not 0.0 < target <= 1.0:
        raise DomainError(f"target sigma must be in (0, 1], got {target}")
    a = np.sort(_abs_values(W))[::-1]
    keep = int(math.floor(target * a.size + 1e-9))
    if keep >= a.size:
        return 0.0
    cut = a[keep]
    above = a[:keep][a[:keep] > cut]
    if above.size == 0:
        return float(np.nextafter(cut, np.inf))
    return float((cut + above[-1]) / 2.0)


@dataclass(frozen=True, eq=False)
class QuantizedModel:
    """A thresholded stack; ``layers`` hold RbmParams (real) or packed layers."""

    mode: QuantMode
    layers: list
    thresholds: list = field(default_factory=list)
    feature_threshold: float | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mode", QuantMode(self.mode))
        object.__setattr__(self, "layers", list(self.layers))

    @property
    def binary(self):
        return self.mode is not QuantMode.SPARSE_REAL

    @property
    def depth(self):
        return len(self.layers)

    def ternary_weights(self):
        """Per-layer dense weight matrices (real or {-1, 0, +1})."""
        if self.binary:
            return [unpack_layer(layer) for layer in self.layers]
        return [p.W for p in self.layers]

    def biases(self):
        if self.binary:
            return [layer.bias for layer in self.layers]
        return [p.b for p in self.layers]


def _thresholds(u, count):
    if np.ndim(u) == 0:
        return [float(u)] * count
    u = [float(x) for x in u]
    if len(u) != count:
        raise ContractError(f"{len(u)} thresholds for {count} layers")
    return u


def sparsify(model, u):
    """Zero every weight with ``|w| <= u`` (one ``u`` per layer or shared)."""
    us = _thresholds(u, model.depth)
    if any(x < 0 for x in us):
        raise DomainError("thresholds must be >= 0")
    layers = []
    for params, ui in zip(model.layers, us):
        W = np.where(np.abs(params.W) <= ui, 0.0, params.W)
        layers.append(replace(params, W=W))
    return QuantizedModel(QuantMode.SPARSE_REAL, layers, us, None, dict(model.provenance))


def sparsify_to_sigma(model, target):
    """Sparsify each layer to the reserved fraction ``target`` (shared or per layer)."""
    targets = _thresholds(target, model.depth)
    us = [threshold_for_sigma(p.W, s) for p, s in zip(model.layers, targets)]
    return sparsify(model, us)


def binarize(qmodel, binary_features=False):
    """Replace surviving weights by their signs and pack them."""
    if qmodel.mode is not QuantMode.SPARSE_REAL:
        raise ContractError(f"binarize expects a sparse-real model, got {qmodel.mode.label}")
    packed = [pack_layer(np.sign(p.W), p.b) for p in qmodel.layers]
    mode = QuantMode.SPARSE_BINARY_FEATURES if binary_features else QuantMode.SPARSE_BINARY
    return QuantizedModel(
        mode, packed, list(qmodel.thresholds), 0.5 if binary_features else None,
        dict(qmodel.provenance),
    )


def quantize(model, mode, threshold=None, target_sigma=None):
    """Sparsify a trained stack and, for ``b``/``B``, binarise it.

    Args:
        model: trained :class:`DanModel`.
        mode: ``"s"``, ``"b"`` or ``"B"`` (or a :class:`QuantMode`).
        threshold: shared magnitude cut ``u``; weights with ``|w| <= u`` go.
        target_sigma: fraction of weights to keep in every layer.

    Returns:
        QuantizedModel

    Raises:
        ContractError: unless exactly one of ``threshold``/``target_sigma`` is set.
    """
    if (threshold is None) == (target_sigma is None):
        raise ContractError("give exactly one of threshold or target_sigma")
    mode = QuantMode(mode)
    if threshold is not None:
        q = sparsify(model, threshold)
    else:
        q = sparsify_to_sigma(model, target_sigma)
    if mode is QuantMode.SPARSE_REAL:
        return q
    return binarize(q, binary_features=mode is QuantMode.SPARSE_BINARY_FEATURES)


def features(model, X):
    """Top-layer features of a dense or quantised stack for a batch ``X``."""
    if isinstance(model, DanModel):
        return extract_features(model, X)
    if model.mode is QuantMode.SPARSE_REAL:
        return extract_features(DanModel(model.layers), X)
    fmode = FeatureMode.BINARY if model.mode is QuantMode.SPARSE_BINARY_FEATURES else FeatureMode.REAL
    return np.asarray(run_network(model.layers, X, fmode), dtype=np.float64)


@dataclass
class LayerReport:
    layer: int
    n_visible: int
    n_hidden: int
    threshold: float
    sigma: float
    reserved: int
    total: int
    with_index_bytes: int

    @property
    def dense_bytes(self):
        return REAL_BYTES * self.total

    @property
    def sparse_real_bytes(self):
        return REAL_BYTES * self.reserved

    @property
    def sparse_binary_bytes(self):
        return self.reserved / 8.0


@dataclass
class QuantizationReport:
    layers: list

    @property
    def total_weights(self):
        return sum(r.total for r in self.layers)

    @property
    def reserved(self):
        return sum(r.reserved for r in self.layers)

    @property
    def mean_sigma(self):
        """Unweighted mean of per-layer sigma."""
        if not self.layers:
            return 0.0
        return sum(r.sigma for r in self.layers) / len(self.layers)

    @property
    def dense_bytes(self):
        return sum(r.dense_bytes for r in self.layers)

    @property
    def sparse_real_bytes(self):
        return sum(r.sparse_real_bytes for r in self.layers)

    @property
    def sparse_binary_bytes(self):
        return sum(r.sparse_binary_bytes for r in self.layers)

    @property
    def with_index_bytes(self):
        return sum(r.with_index_bytes for r in self.layers)

    CSV_HEADER = (
        "layer", "n_visible", "n_hidden", "threshold", "sigma", "reserved", "total_weights",
        "dense_bytes", "sparse_real_bytes", "sparse_binary_bytes", "with_index_bytes",
    )

    def rows(self):
        out = []
        for r in self.layers:
            out.append((r.layer, r.n_visible, r.n_hidden, f"{r.threshold:.6g}", f"{r.sigma:.6f}",
                        r.reserved, r.total, r.dense_bytes, r.sparse_real_bytes,
                        f"{r.sparse_binary_bytes:.1f}", r.with_index_bytes))
        out.append(("total", "", "", "", f"{self.mean_sigma:.6f}", self.reserved,
                    self.total_weights, self.dense_bytes, self.sparse_real_bytes,
                    f"{self.sparse_binary_bytes:.1f}", self.with_index_bytes))
        return out

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        writer.writerows(self.rows())
        return buf.getvalue()


def _mask_bytes(n_visible, n_hidden):
    return 2 * n_hidden * ((n_visible + 63) // 64) * 8


def memory_report(model, u=0.0):
    """Memory accounting for a dense stack (at threshold ``u``) or a quantised one.

    Headline figures count 4 bytes per real weight and one bit per
    reserved binary weight; ``with_index_bytes`` is the size of the two
    packed masks actually stored per layer.
    """
    rows = []
    if isinstance(model, DanModel):
        for t, p in enumerate(model.layers):
            s = sigma(p.W, u)
            rows.append(LayerReport(t, p.n_visible, p.n_hidden, u, s,
                                    int(round(s * p.W.size)), p.W.size,
                                    _mask_bytes(p.n_visible, p.n_hidden)))
        return QuantizationReport(rows)
    us = model.thresholds or [0.0] * model.depth
    for t, (layer, ui) in enumerate(zip(model.layers, us)):
        if isinstance(layer, SparseBinaryLayer):
            n, d, reserved = layer.n_visible, layer.n_hidden, layer.reserved
            idx = layer.mask_bytes()
        else:
            n, d = layer.W.shape
            reserved = int(np.count_nonzero(layer.W))
            idx = _mask_bytes(n, d)
        rows.append(LayerReport(t, n, d, ui, reserved / (n * d), reserved, n * d, idx))
    return QuantizationReport(rows)


def kib(nbytes):
    """Whole KiB, rounding halves up."""
    return int(math.floor(nbytes / 1024.0 + 0.5))
