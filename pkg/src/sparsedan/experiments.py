"""Experiment presets and the pipelines behind the ``report`` and ``sweep`` commands.

Every random choice hangs off ``Rng(seed).child(k)`` with a fixed ``k`` per
purpose, so two runs with the same seed agree bit for bit:

====  ==========================================
k     purpose
====  ==========================================
0     which training images are drawn
1     which test images are drawn
2     RBM initialisation, shuffling and sampling
3     classifier head shuffling
====  ==========================================

The DBN and DAN of one seed therefore start from identical weights and see
identical mini-batches; only the weight decay differs.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import HeadConfig, accuracy, train_head
from .mnist import load_split, subsample
from .numerics import ContractError, Rng
from .quantize import QuantMode, features, kib, memory_report, quantize, sigma
from .rbm import RbmParams, TrainConfig, VisibleKind
from .regularizer import RegKind, RegularizerConfig, mixed_norm
from .stack import DanModel, train_stack

SIGMA_PROBE_U = 0.1

CHILD_TRAIN_DATA = 0
CHILD_TEST_DATA = 1
CHILD_RBM = 2
CHILD_HEAD = 3


@dataclass(frozen=True)
class Preset:
    """Everything needed to reproduce one experimental setting."""

    name: str
    layers: tuple
    n_train: int
    n_test: int
    train: TrainConfig
    lam: float = 1e-4
    gamma: float = 0.5
    # decay applied once per training case (True) or once per mini-batch
    per_case_decay: bool = True
    sigma_s: float = 0.25
    sigma_b: float = 0.20
    head: HeadConfig = field(default_factory=HeadConfig)
    expected: dict = field(default_factory=dict)

    @property
    def decay_scale(self):
        return float(self.train.batch_size) if self.per_case_decay else 1.0

    def reg(self, kind=RegKind.MIXED, lam=None, gamma=None):
        return RegularizerConfig(
            kind=RegKind(kind),
            lam=self.lam if lam is None else lam,
            gamma=self.gamma if gamma is None else gamma,
        )


PRESETS = {
    "table2": Preset(
        "table2", (784, 800, 800), 10000, 10000, TrainConfig(),
        expected={"DBN": 0.973, "DAN": 0.974, "DAN_s": 0.972, "DAN_b": 0.940, "DAN_B": 0.933},
    ),
    "small": Preset("small", (784, 200, 200), 2000, 2000, TrainConfig(epochs=15)),
}


def get_preset(name, **overrides):
    """Look up a preset and apply field overrides (``epochs`` goes to ``train``)."""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ContractError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    train_fields = {k: overrides.pop(k) for k in list(overrides) if k in TrainConfig.__dataclass_fields__}
    if train_fields:
        preset = replace(preset, train=replace(preset.train, **train_fields))
    return replace(preset, **overrides) if overrides else preset


@dataclass(frozen=True, eq=False)
class Split:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    source: str


def load_data(data_dir, preset, seed):
    """Seeded draw of training images from the train split and test images from the test split."""
    root = Rng(seed)
    train = subsample(root.child(CHILD_TRAIN_DATA), load_split(data_dir, "train"), preset.n_train)
    test = subsample(root.child(CHILD_TEST_DATA), load_split(data_dir, "test"), preset.n_test)
    return Split(train.images, train.labels, test.images, test.labels,
                 f"{train.source_hash}|{test.source_hash}")


# -- model cache -------------------------------------------------------------

class ModelCache:
    """Float64 ``.npz`` store of trained stacks keyed by their full recipe.

    DANM files hold 32-bit weights, so a model read back from one would not
    match a freshly trained stack bit for bit; the cache keeps 64 bits.
    """

    def __init__(self, root):
        self.root = Path(root) if root is not None else None

    def _path(self, key):
        return self.root / f"{key}.npz"

    def get(self, key):
        if self.root is None or not self._path(key).exists():
            return None
        with np.load(self._path(key)) as z:
            depth = int(z["depth"])
            layers = [
                RbmParams(z[f"W{t}"], z[f"b{t}"], z[f"c{t}"], VisibleKind(str(z[f"v{t}"])))
                for t in range(depth)
            ]
        return layers

    def put(self, key, model):
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        arrays = {"depth": np.array(model.depth)}
        for t, p in enumerate(model.layers):
            arrays.update({f"W{t}": p.W, f"b{t}": p.b, f"c{t}": p.c, f"v{t}": np.array(p.visible_kind.value)})
        tmp = self.root / f"{key}.tmp.npz"
        np.savez(tmp, **arrays)
        tmp.replace(self._path(key))


def recipe_key(preset, reg, seed, source):
    recipe = {
        "layers": list(preset.layers),
        "n_train": preset.n_train,
        "train": asdict(preset.train),
        "reg": [reg.kind.value, reg.lam, reg.gamma, reg.eps_norm],
        "decay_scale": preset.decay_scale,
        "seed": seed,
        "source": source,
    }
    return hashlib.sha256(json.dumps(recipe, sort_keys=True).encode()).hexdigest()[:20]


def train_model(preset, split, seed, reg, cache=None, on_epoch=None):
    """Train (or fetch from ``cache``) the stack described by ``preset`` and ``reg``."""
    cache = cache or ModelCache(None)
    key = recipe_key(preset, reg, seed, split.source)
    provenance = {"lambda": reg.lam, "gamma": reg.gamma, "seed": seed, "reg": reg.kind.value}
    layers = cache.get(key)
    if layers is not None:
        return DanModel(layers, reg, preset.train, provenance)
    model = train_stack(
        Rng(seed).child(CHILD_RBM), split.train_x, preset.layers, preset.train, reg,
        decay_scale=preset.decay_scale, on_epoch=on_epoch, provenance=provenance,
    )
    cache.put(key, model)
    return model


def evaluate(model, split, seed, head_cfg=HeadConfig()):
    """Train a fresh head on the model's training features; return test accuracy."""
    head = train_head(Rng(seed).child(CHILD_HEAD), features(model, split.train_x), split.train_y, head_cfg)
    return accuracy(head, features(model, split.test_x), split.test_y)


def layer_stats(model, u=SIGMA_PROBE_U):
    """Per layer: ``(sigma at u, mixed norm of W, mixed norm of W^T)``."""
    return [(sigma(p.W, u), mixed_norm(p.W), mixed_norm(p.W.T)) for p in model.layers]


# -- comparison table ---------------------------------------------------------

TABLE_HEADER = (
    "method", "weight_bits", "feature_bits", "sigma", "memory_kib", "memory_kib_with_index",
    "accuracy",
)


def variant_memory(qmodel_or_model):
    """``(headline KiB, KiB including the stored connection masks)``."""
    rep = memory_report(qmodel_or_model)
    if isinstance(qmodel_or_model, DanModel):
        return kib(rep.dense_bytes), kib(rep.dense_bytes)
    if qmodel_or_model.mode is QuantMode.SPARSE_REAL:
        return kib(rep.sparse_real_bytes), kib(rep.sparse_real_bytes + rep.with_index_bytes)
    return kib(rep.sparse_binary_bytes), kib(rep.with_index_bytes)


def table2_rows(preset, split, seed, cache=None, on_epoch=None):
    """Train DBN and DAN, derive DAN_s/DAN_b/DAN_B, evaluate all five.

    Returns ``(rows, models)`` where rows follow ``TABLE_HEADER`` and models
    maps method names to the evaluated (possibly quantised) networks.
    """
    dbn = train_model(preset, split, seed, preset.reg(RegKind.NONE, lam=0.0), cache, on_epoch)
    dan = train_model(preset, split, seed, preset.reg(), cache, on_epoch)
    variants = [
        ("DBN", dbn, 32, 32),
        ("DAN", dan, 32, 32),
        ("DAN_s", quantize(dan, "s", target_sigma=preset.sigma_s), 32, 32),
        ("DAN_b", quantize(dan, "b", target_sigma=preset.sigma_b), 1, 32),
        ("DAN_B", quantize(dan, "B", target_sigma=preset.sigma_b), 1, 1),
    ]
    rows, models = [], {}
    for name, net, wbits, fbits in variants:
        headline_kib, index_kib = variant_memory(net)
        s = 1.0 if isinstance(net, DanModel) else memory_report(net).reserved / memory_report(net).total_weights
        rows.append((name, wbits, fbits, s, headline_kib, index_kib, evaluate(net, split, seed, preset.head)))
        models[name] = net
    return rows, models


# -- sweeps --------------------------------------------------------------------

SWEEP_PARAMS = ("lambda", "gamma", "sigma")


def sweep_header(depth):
    cols = ["param", "value", "variant"]
    cols += [f"sigma_l{t + 1}" for t in range(depth)]
    cols += [f"mixed_norm_l{t + 1}" for t in range(depth)]
    cols += [f"mixed_norm_T_l{t + 1}" for t in range(depth)]
    return tuple(cols + ["accuracy"])


def _stats_row(param, value, variant, model, acc):
    stats = layer_stats(model)
    return (param, value, variant, *[s for s, _, _ in stats], *[m for _, m, _ in stats],
            *[mt for _, _, mt in stats], acc)


def _quantized_row(param, value, variant, source, q, acc):
    # sigma of the deployed network, norms of the real weights it came from
    rep = memory_report(q)
    sig = [r.sigma for r in rep.layers]
    return (param, value, variant, *sig, *[mixed_norm(p.W) for p in source.layers],
            *[mixed_norm(p.W.T) for p in source.layers], acc)


def sweep_rows(param, values, preset, split, seed, cache=None, baselines=False, on_epoch=None):
    """Rows of ``sweep_header`` for one swept parameter.

    ``lambda`` and ``gamma`` retrain the DAN for every value (``baselines``
    adds L1/L2-decayed DBNs at each lambda). ``sigma`` trains once and
    quantises DBN and DAN (plus the baselines, if asked) at every target.
    """
    if param not in SWEEP_PARAMS:
        raise ContractError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    rows = []
    if param in ("lambda", "gamma"):
        for value in values:
            regs = [("DAN", preset.reg(lam=value) if param == "lambda" else preset.reg(gamma=value))]
            if baselines and param == "lambda":
                regs += [("DBN_1", preset.reg(RegKind.L1, lam=value)),
                         ("DBN_2", preset.reg(RegKind.L2, lam=value))]
            for name, reg in regs:
                model = train_model(preset, split, seed, reg, cache, on_epoch)
                rows.append(_stats_row(param, value, name, model, evaluate(model, split, seed, preset.head)))
        return rows
    sources = [("DBN", preset.reg(RegKind.NONE, lam=0.0)), ("DAN", preset.reg())]
    if baselines:
        sources += [("DBN_1", preset.reg(RegKind.L1)), ("DBN_2", preset.reg(RegKind.L2))]
    models = {name: train_model(preset, split, seed, reg, cache, on_epoch) for name, reg in sources}
    for value in values:
        for name, model in models.items():
            for mode in ("s", "b"):
                q = quantize(model, mode, target_sigma=value)
                rows.append(_quantized_row(param, value, f"{name}_{mode}", model, q,
                                           evaluate(q, split, seed, preset.head)))
        q = quantize(models["DAN"], "B", target_sigma=value)
        rows.append(_quantized_row(param, value, "DAN_B", models["DAN"], q, evaluate(q, split, seed, preset.head)))
    return rows
