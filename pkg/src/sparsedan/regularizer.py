"""Weight-decay penalties: mixed (row/column group) norm, L1 and squared L2.

The mixed norm of a matrix is the sum of the Euclidean lengths of its rows.
Penalising ``gamma * ||W||_M + (1 - gamma) * ||W^T||_M`` pushes whole rows
(inputs) and whole columns (hidden units) to exactly zero.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np

from .numerics import DomainError, as_matrix


class RegKind(str, enum.Enum):
    MIXED = "mixed"
    L1 = "l1"
    L2 = "l2"
    NONE = "none"


@dataclass(frozen=True)
class RegularizerConfig:
    kind: RegKind = RegKind.MIXED
    lam: float = 1e-4
    gamma: float = 0.5
    eps_norm: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind(self.kind))
        if self.lam < 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.eps_norm <= 0:
            raise DomainError("eps_norm must be > 0")

    @property
    def active(self):
        return self.kind is not RegKind.NONE and self.lam > 0


def mixed_norm(W):
    """Sum of row Euclidean norms."""
    W = as_matrix(W, "W")
    return float(np.sqrt((W * W).sum(axis=1)).sum())


def l1_norm(W):
    return float(np.abs(as_matrix(W, "W")).sum())


def l2_norm(W):
    """Frobenius norm (not squared)."""
    W = as_matrix(W, "W")
    return float(np.sqrt((W * W).sum()))


def reg_value(W, cfg):
    if not cfg.active:
        return 0.0
    if cfg.kind is RegKind.MIXED:
        W = as_matrix(W, "W")
        return cfg.lam * (cfg.gamma * mixed_norm(W) + (1.0 - cfg.gamma) * mixed_norm(W.T))
    if cfg.kind is RegKind.L1:
        return cfg.lam * l1_norm(W)
    return cfg.lam * l2_norm(W) ** 2


def reg_gradient(W, cfg):
    """Gradient of :func:`reg_value` with respect to ``W``.

    For the mixed kind each entry is divided by the length of its row
    (gamma part) and of its column (1 - gamma part); lengths below
    ``cfg.eps_norm`` are replaced by ``eps_norm`` so zero groups give a zero
    gradient.
    """
    W = as_matrix(W, "W")
    if not cfg.active:
        return np.zeros_like(W)
    if cfg.kind is RegKind.L1:
        return cfg.lam * np.sign(W)
    if cfg.kind is RegKind.L2:
        return 2.0 * cfg.lam * W
    return cfg.lam * W * _mixed_scale(W, cfg.gamma, cfg.eps_norm)


def _mixed_scale(W, gamma, eps_norm):
    sq = W * W
    row = np.maximum(np.sqrt(sq.sum(axis=1)), eps_norm)
    col = np.maximum(np.sqrt(sq.sum(axis=0)), eps_norm)
    return gamma / row[:, None] + (1.0 - gamma) / col[None, :]


def shrink_weights(W, cfg, step):
    """One decay step ``W - step * grad`` that never flips a sign.

    Entries whose step would cross zero are set to exactly zero, which is the
    proximal choice for the non-smooth penalties at the origin.
    """
    W = np.asarray(W, dtype=np.float64)
    if not cfg.active or step == 0:
        return W.copy()
    if cfg.kind is RegKind.MIXED:
        # w * (1 - step*lam*scale) changes sign exactly when the factor goes negative
        factor = 1.0 - step * cfg.lam * _mixed_scale(W, cfg.gamma, cfg.eps_norm)
        return W * np.maximum(factor, 0.0)
    if cfg.kind is RegKind.L1:
        return np.sign(W) * np.maximum(np.abs(W) - step * cfg.lam, 0.0)
    factor = 1.0 - 2.0 * step * cfg.lam
    return W * max(factor, 0.0)


def decay_update(params, cfg, lr):
    """Apply one regularisation step of size ``lr`` to the weights of an RBM.

    Biases are left untouched.
    """
    if not cfg.active or lr == 0:
        return params
    return replace(params, W=shrink_weights(params.W, cfg, lr))
