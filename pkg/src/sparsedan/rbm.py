"""Restricted Boltzmann machine: energy, conditionals, Gibbs sampling and CD-k.

Shapes follow the usual convention: ``W`` is ``(n_visible, n_hidden)``, the
hidden bias ``b`` has length ``n_hidden`` and the visible bias ``c`` has length
``n_visible``. Visible vectors may be passed one at a time (1-D) or as a batch
of rows (2-D); every conditional broadcasts over the leading batch axis.
"""

import enum
import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .numerics import ContractError, DomainError, as_matrix, sample_bernoulli, sigmoid
from .regularizer import RegularizerConfig, RegKind, decay_update

MAX_ENUMERATION_UNITS = 20


class VisibleKind(str, enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True, eq=False)
class RbmParams:
    W: np.ndarray
    b: np.ndarray
    c: np.ndarray
    visible_kind: VisibleKind = VisibleKind.BERNOULLI

    def __post_init__(self):
        W = as_matrix(self.W, "W")
        b = np.asarray(self.b, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if b.shape != (W.shape[1],) or c.shape != (W.shape[0],):
            raise ContractError(
                f"bias shapes {b.shape}, {c.shape} do not match W {W.shape}"
            )
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ContractError("biases must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "visible_kind", VisibleKind(self.visible_kind))

    @property
    def n_visible(self):
        return self.W.shape[0]

    @property
    def n_hidden(self):
        return self.W.shape[1]

    def equals(self, other):
        """Bit-exact equality of all parameters."""
        return (
            self.visible_kind == other.visible_kind
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.c, other.c)
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 50
    batch_size: int = 100
    cd_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise DomainError("learning rate must be >= 0")
        if self.epochs < 0 or self.batch_size < 1 or self.cd_steps < 1:
            raise DomainError("epochs >= 0, batch_size >= 1 and cd_steps >= 1 required")


def init_params(rng, n_visible, n_hidden, visible_kind=VisibleKind.BERNOULLI, std=0.01):
    """Small Gaussian weights, zero biases."""
    W = rng.normal(0.0, std, size=(n_visible, n_hidden))
    return RbmParams(W, np.zeros(n_hidden), np.zeros(n_visible), visible_kind)


def _visible(params, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != params.n_visible or v.ndim not in (1, 2):
        raise ContractError(f"visible input shape {v.shape} vs n_visible={params.n_visible}")
    return v


def _hidden(params, h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.n_hidden or h.ndim not in (1, 2):
        raise ContractError(f"hidden input shape {h.shape} vs n_hidden={params.n_hidden}")
    return h


def energy(params, v, h):
    """E(v, h) = -b.h - c.v - v.W.h"""
    v = _visible(params, v)
    h = _hidden(params, h)
    if v.ndim != 1 or h.ndim != 1:
        raise ContractError("energy takes single configurations")
    return float(-(params.b @ h) - params.c @ v - v @ params.W @ h)


def prob_h_given_v(params, v):
    v = _visible(params, v)
    return sigmoid(v @ params.W + params.b)


def prob_v_given_h(params, h):
    """Bernoulli: on-probabilities. Gaussian: means (unit variance)."""
    h = _hidden(params, h)
    pre = h @ params.W.T + params.c
    if params.visible_kind is VisibleKind.GAUSSIAN:
        return pre
    return sigmoid(pre)


def sample_v_given_h(rng, params, h):
    mean = prob_v_given_h(params, h)
    if params.visible_kind is VisibleKind.GAUSSIAN:
        return mean + rng.normal(size=np.shape(mean))
    return sample_bernoulli(rng, mean)


def gibbs_step(rng, params, v):
    """One CD-style Gibbs iteration from ``v``.

    Returns ``(h_sample, v_recon, h_recon_prob)``; the reconstruction is the
    mean-field value of the visible units, not a sample.
    """
    h_sample = sample_bernoulli(rng, prob_h_given_v(params, v))
    v_recon = prob_v_given_h(params, h_sample)
    return h_sample, v_recon, prob_h_given_v(params, v_recon)


def gibbs_chain(rng, params, v, steps):
    """Run ``steps`` full sampling sweeps (v -> h -> v) and return the last v."""
    v = _visible(params, v)
    for _ in range(steps):
        h = sample_bernoulli(rng, prob_h_given_v(params, v))
        v = sample_v_given_h(rng, params, h)
    return v


def cd_gradient(rng, params, batch, cd_steps=1):
    """Contrastive-divergence statistics for one mini-batch.

    Returns ``(dW, db, dc, recon_error)`` where the deltas are
    data-minus-model expectations averaged over the batch. The data side
    uses hidden probabilities; the model side uses the mean-field
    reconstruction after ``cd_steps`` Gibbs iterations.
    """
    v0 = _visible(params, batch)
    if v0.ndim == 1:
        v0 = v0[None, :]
    if v0.shape[0] == 0:
        raise ContractError("empty batch")
    h0 = prob_h_given_v(params, v0)
    hp = h0
    for step in range(cd_steps):
        h_sample = sample_bernoulli(rng, hp)
        vk = prob_v_given_h(params, h_sample)
        hp = prob_h_given_v(params, vk)
        if step == 0:
            recon_error = float(np.mean((v0 - vk) ** 2))
    m = v0.shape[0]
    dW = (v0.T @ h0 - vk.T @ hp) / m
    db = (h0 - hp).mean(axis=0)
    dc = (v0 - vk).mean(axis=0)
    return dW, db, dc, recon_error


def cd_update(rng, params, batch, cfg):
    """Contrastive-divergence parameter step (no weight decay)."""
    dW, db, dc, _ = cd_gradient(rng, params, batch, cfg.cd_steps)
    if cfg.lr == 0:
        return params
    return replace(
        params, W=params.W + cfg.lr * dW, b=params.b + cfg.lr * db, c=params.c + cfg.lr * dc
    )


def _enumeration_guard(params):
    if params.n_visible + params.n_hidden > MAX_ENUMERATION_UNITS:
        raise ContractError(
            f"exact enumeration refused: n+d = {params.n_visible + params.n_hidden}"
            f" > {MAX_ENUMERATION_UNITS}"
        )
    if params.visible_kind is not VisibleKind.BERNOULLI:
        raise ContractError("exact enumeration needs binary visible units")


def _all_states(k):
    return np.array(list(itertools.product((0.0, 1.0), repeat=k))).reshape(-1, k)


def log_partition(params):
    """log Z by summing exp(-E) over every (v, h) pair."""
    _enumeration_guard(params)
    V = _all_states(params.n_visible)
    H = _all_states(params.n_hidden)
    neg_e = (V @ params.W @ H.T) + (V @ params.c)[:, None] + (H @ params.b)[None, :]
    top = neg_e.max()
    return float(top + math.log(np.exp(neg_e - top).sum()))


def exact_log_likelihood(params, samples):
    """Sum of log p(v) over ``samples`` using brute-force enumeration."""
    _enumeration_guard(params)
    S = np.atleast_2d(_visible(params, samples))
    H = _all_states(params.n_hidden)
    log_z = log_partition(params)
    neg_e = (S @ params.W @ H.T) + (S @ params.c)[:, None] + (H @ params.b)[None, :]
    top = neg_e.max(axis=1, keepdims=True)
    log_unnorm = top[:, 0] + np.log(np.exp(neg_e - top).sum(axis=1))
    return float((log_unnorm - log_z).sum())


def train_rbm(rng, data, n_hidden, cfg, reg=None, visible_kind=VisibleKind.BERNOULLI,
              decay_scale=1.0, on_epoch=None, init=None):
    """Train one (Ada)RBM layer by mini-batch CD with interleaved weight decay.

    Each mini-batch applies a CD step and then, if ``reg`` is active, one
    decay step of size ``cfg.lr * decay_scale``. Rows are reshuffled every
    epoch with ``rng``.

    Args:
        rng: random stream; consumed for initialisation, shuffling and sampling.
        data: ``(N, n_visible)`` training matrix.
        n_hidden: number of hidden units.
        cfg: :class:`TrainConfig`.
        reg: optional :class:`RegularizerConfig`; ``None`` trains a plain RBM.
        decay_scale: multiplier on the decay step size.
        on_epoch: optional callback ``(epoch, recon_error, params)``.
        init: optional starting :class:`RbmParams` (skips initialisation).

    Returns:
        The trained :class:`RbmParams`.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ContractError("training data must be a non-empty 2-D array")
    if reg is None:
        reg = RegularizerConfig(kind=RegKind.NONE, lam=0.0)
    params = init if init is not None else init_params(rng, data.shape[1], n_hidden, visible_kind)
    if params.n_visible != data.shape[1] or params.n_hidden != n_hidden:
        raise ContractError("initial parameters do not match data / n_hidden")
    W, b, c = params.W.copy(), params.b.copy(), params.c.copy()
    n = data.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        err_sum = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = data[order[start:start + cfg.batch_size]]
            current = RbmParams(W, b, c, params.visible_kind)
            dW, db, dc, err = cd_gradient(rng, current, batch, cfg.cd_steps)
            W = W + cfg.lr * dW
            b = b + cfg.lr * db
            c = c + cfg.lr * dc
            if reg.active:
                W = decay_update(RbmParams(W, b, c, params.visible_kind), reg,
                                 cfg.lr * decay_scale).W
            err_sum += err
            batches += 1
        if on_epoch is not None:
            on_epoch(epoch, err_sum / batches, RbmParams(W, b, c, params.visible_kind))
    return RbmParams(W, b, c, params.visible_kind)
