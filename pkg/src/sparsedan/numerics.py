"""Seeded random generation and the dense numeric helpers shared by every module.

Random streams come from numpy's PCG64 bit generator (a permuted
congruential generator, i.e. an LCG with an output permutation). Its output
sequence for a given seed is fixed by numpy's stability policy and does not
depend on the platform, so training runs are reproducible bit for bit.
"""

import hashlib

import numpy as np


class ContractError(ValueError):
    """A caller broke an operation's precondition (shapes, modes, emptiness)."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


def _index_hash(index):
    digest = hashlib.blake2b(str(int(index)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Single-owner random stream.

    Args:
        seed: unsigned 64-bit seed.
    """

    def __init__(self, seed=0):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self.gen = np.random.Generator(np.random.PCG64(seed))

    def child(self, index):
        """Independent stream for worker ``index`` (seed XOR hash(index))."""
        return Rng(self.seed ^ _index_hash(index))

    def uniform(self, size=None):
        return self.gen.random(size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def normal(self, mean=0.0, std=1.0, size=None):
        return self.gen.normal(mean, std, size)

    def __repr__(self):
        return f"Rng(seed={self.seed})"


def sigmoid(x):
    """Logistic function 1/(1+exp(-x)), overflow-free for any finite input.

    Works elementwise on arrays and returns a Python float for scalars.
    """
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    e = np.exp(arr[~pos])
    out[~pos] = e / (1.0 + e)
    if out.ndim == 0:
        return float(out)
    return out


def sample_bernoulli(rng, p):
    """Draw 0/1 with probability ``p`` (scalar or array, elementwise)."""
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p_arr)) or np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise DomainError("Bernoulli probability must lie in [0, 1]")
    draws = (rng.uniform(p_arr.shape) < p_arr).astype(np.float64)
    if draws.ndim == 0:
        return int(draws)
    return draws


def sample_gaussian(rng, mean, variance):
    """Draw from N(mean, variance); ``mean`` may be an array."""
    var = np.asarray(variance, dtype=np.float64)
    if np.any(var < 0.0):
        raise DomainError("variance must be non-negative")
    mean_arr = np.asarray(mean, dtype=np.float64)
    shape = np.broadcast_shapes(mean_arr.shape, var.shape)
    draws = mean_arr + np.sqrt(var) * rng.normal(size=shape)
    if np.ndim(draws) == 0:
        return float(draws)
    return draws


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} has non-finite entries")
    return m


def as_vector(a, length=None, name="vector"):
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise ContractError(f"{name} has length {v.shape[0]}, expected {length}")
    return v
