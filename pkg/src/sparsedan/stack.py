"""Greedy layer-wise stacking of (Ada)RBMs and deterministic feature extraction."""

from dataclasses import dataclass, field

import numpy as np

from .numerics import ContractError, sigmoid
from .rbm import RbmParams, TrainConfig, VisibleKind, prob_h_given_v, train_rbm
from .regularizer import RegKind, RegularizerConfig


@dataclass(frozen=True, eq=False)
class DanModel:
    """Ordered stack of RBM layers; ``layers[0]`` faces the input."""

    layers: list
    reg_config: RegularizerConfig = field(
        default_factory=lambda: RegularizerConfig(kind=RegKind.NONE, lam=0.0)
    )
    train_config: TrainConfig = field(default_factory=TrainConfig)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", list(self.layers))
        for t, (lower, upper) in enumerate(zip(self.layers, self.layers[1:])):
            if lower.n_hidden != upper.n_visible:
                raise ContractError(
                    f"layer {t} has {lower.n_hidden} hidden units but layer {t + 1}"
                    f" expects {upper.n_visible} inputs"
                )

    @property
    def depth(self):
        return len(self.layers)

    @property
    def sizes(self):
        if not self.layers:
            return []
        return [self.layers[0].n_visible] + [p.n_hidden for p in self.layers]

    def equals(self, other):
        return len(self.layers) == len(other.layers) and all(
            a.equals(b) for a, b in zip(self.layers, other.layers)
        )


def train_stack(rng, data, layer_sizes, train_cfg, reg_cfg=None, decay_scale=1.0,
                on_epoch=None, provenance=None):
    """Train a DAN (or, with no regulariser, a DBN) one layer at a time.

    Each layer is trained on the hidden probabilities produced by the frozen
    layers below it. ``on_epoch`` receives ``(layer, epoch, recon_error, params)``.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ContractError("training data must be a non-empty 2-D array")
    layer_sizes = [int(s) for s in layer_sizes]
    if len(layer_sizes) < 2:
        raise ContractError("need the input size and at least one hidden layer")
    if layer_sizes[0] != data.shape[1]:
        raise ContractError(f"input size {layer_sizes[0]} != data width {data.shape[1]}")
    if reg_cfg is None:
        reg_cfg = RegularizerConfig(kind=RegKind.NONE, lam=0.0)
    layers = []
    inputs = data
    for t, n_hidden in enumerate(layer_sizes[1:]):
        cb = None
        if on_epoch is not None:
            cb = (lambda t_: lambda e, err, p: on_epoch(t_, e, err, p))(t)
        params = train_rbm(rng, inputs, n_hidden, train_cfg, reg_cfg,
                           VisibleKind.BERNOULLI, decay_scale=decay_scale, on_epoch=cb)
        layers.append(params)
        if t + 2 < len(layer_sizes):
            inputs = prob_h_given_v(params, inputs)
    return DanModel(layers, reg_cfg, train_cfg, dict(provenance or {}))


def extract_features(model, v, depth=None):
    """Propagate hidden probabilities up to layer ``depth`` (default: top).

    ``v`` may be a single vector or a batch of rows. ``depth=0`` returns the
    input unchanged.
    """
    if depth is None:
        depth = model.depth
    if not 0 <= depth <= model.depth:
        raise ContractError(f"depth {depth} outside 0..{model.depth}")
    out = np.asarray(v, dtype=np.float64)
    for params in model.layers[:depth]:
        out = prob_h_given_v(params, out)
    return out


FEATURE_STATS_HEADER = ("layer", "unit", "bias_sigmoid", "mean_activation", "mean_abs_centered")


def feature_sparsity_stats(model, data):
    """Per hidden unit: mean activation and mean |h_j - sigmoid(b_j)|.

    Returns one tuple per hidden unit of every layer, matching
    ``FEATURE_STATS_HEADER``.
    """
    rows = []
    acts = np.asarray(data, dtype=np.float64)
    for t, params in enumerate(model.layers):
        acts = prob_h_given_v(params, acts)
        base = sigmoid(params.b)
        mean_act = acts.mean(axis=0)
        centered = np.abs(acts - base).mean(axis=0)
        for j in range(params.n_hidden):
            rows.append((t, j, float(base[j]), float(mean_act[j]), float(centered[j])))
    return rows


def quiet_fraction(stats, tol=0.01):
    """Fraction of units whose mean |h - sigmoid(b)| is below ``tol``."""
    if not stats:
        return 0.0
    return sum(1 for r in stats if r[4] < tol) / len(stats)
