import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sparsedan.rbm import RbmParams
from sparsedan.regularizer import (
    RegKind,
    RegularizerConfig,
    decay_update,
    l1_norm,
    l2_norm,
    mixed_norm,
    reg_gradient,
    reg_value,
    shrink_weights,
)


def finite_difference(f, W, h=1e-6):
    g = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        up, down = W.copy(), W.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (f(up) - f(down)) / (2 * h)
    return g


def test_mixed_norm_examples():
    assert mixed_norm([[3.0, 4.0], [0.0, 0.0]]) == 5.0
    assert mixed_norm(np.eye(2)) == 2.0
    col = np.array([[1.5], [-2.0], [0.25]])
    assert mixed_norm(col) == pytest.approx(l1_norm(col))


def test_l1_l2_examples():
    assert l1_norm([[1, -2], [3, -4]]) == 10.0
    assert l2_norm([[3, 4], [0, 0]]) == 5.0
    assert l1_norm(np.zeros((3, 2))) == 0.0 and l2_norm(np.zeros((3, 2))) == 0.0


def test_reg_value_gamma_extremes(np_rng):
    W = np_rng.normal(size=(4, 6))
    assert reg_value(W, RegularizerConfig("mixed", 0.3, 1.0)) == pytest.approx(0.3 * mixed_norm(W))
    assert reg_value(W, RegularizerConfig("mixed", 0.3, 0.0)) == pytest.approx(0.3 * mixed_norm(W.T))
    S = W[:4, :4] + W[:4, :4].T
    for g in (0.0, 0.2, 0.9):
        assert reg_value(S, RegularizerConfig("mixed", 0.3, g)) == pytest.approx(0.3 * mixed_norm(S))


def test_reg_value_other_kinds(np_rng):
    W = np_rng.normal(size=(3, 3))
    assert reg_value(W, RegularizerConfig("l1", 0.5)) == pytest.approx(0.5 * np.abs(W).sum())
    assert reg_value(W, RegularizerConfig("l2", 0.5)) == pytest.approx(0.5 * (W**2).sum())
    assert reg_value(W, RegularizerConfig("none", 0.5)) == 0.0


def test_zero_matrix_zero_gradient():
    g = reg_gradient(np.zeros((3, 4)), RegularizerConfig("mixed", 1.0, 0.5))
    assert np.all(g == 0)


def test_single_row_gradient_is_unit_row():
    W = np.array([[3.0, 4.0], [0.0, 0.0]])
    g = reg_gradient(W, RegularizerConfig("mixed", 0.7, 1.0))
    assert np.allclose(g[0], 0.7 * np.array([0.6, 0.8]), atol=1e-15)
    assert np.all(g[1] == 0)


@pytest.mark.parametrize("kind", ["mixed", "l1", "l2"])
def test_gradient_matches_finite_differences_100_matrices(kind):
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(100):
        shape = (int(rng.integers(2, 7)), int(rng.integers(2, 7)))
        W = rng.normal(size=shape)
        # keep entries away from the L1 kink
        W = np.where(np.abs(W) < 0.05, 0.05 * np.sign(W) + 0.05 * (W == 0), W)
        cfg = RegularizerConfig(kind, float(rng.uniform(0.1, 2.0)), float(rng.uniform(0, 1)))
        fd = finite_difference(lambda M: reg_value(M, cfg), W)
        g = reg_gradient(W, cfg)
        rel = np.linalg.norm(g - fd) / np.linalg.norm(fd)
        worst = max(worst, rel)
    assert worst < 1e-5


def test_gradient_5x4_gamma_half():
    W = np.random.default_rng(1).normal(size=(5, 4))
    cfg = RegularizerConfig("mixed", 1.0, 0.5)
    fd = finite_difference(lambda M: reg_value(M, cfg), W)
    rel = np.abs(reg_gradient(W, cfg) - fd) / np.abs(fd)
    assert rel.max() < 1e-5


def test_decay_lambda_zero_is_identity(np_rng):
    p = RbmParams(np_rng.normal(size=(3, 2)), np.ones(2), np.ones(3))
    out = decay_update(p, RegularizerConfig("mixed", 0.0, 0.5), 0.1)
    assert np.array_equal(out.W, p.W)


def test_decay_clamps_instead_of_flipping():
    p = RbmParams(np.array([[3.0, 4.0], [1.0, -2.0]]), np.zeros(2), np.zeros(2))
    out = decay_update(p, RegularizerConfig("mixed", 5.0, 1.0), 1.0)
    assert np.array_equal(out.W[0], [0.0, 0.0])
    assert np.array_equal(out.W[1], [0.0, 0.0])
    assert np.array_equal(out.b, p.b) and np.array_equal(out.c, p.c)


@pytest.mark.parametrize("kind", ["mixed", "l1", "l2"])
def test_decay_never_changes_sign(kind, np_rng):
    W = np_rng.normal(size=(6, 5))
    out = shrink_weights(W, RegularizerConfig(kind, 3.0, 0.4), 0.5)
    assert np.all(out * W >= 0)
    assert np.all(np.abs(out) <= np.abs(W))


def test_repeated_decay_descends_mixed_norm():
    W = np.random.default_rng(3).normal(size=(10, 10))
    cfg = RegularizerConfig("mixed", 1e-3, 0.5)
    previous = mixed_norm(W)
    for _ in range(500):
        W = shrink_weights(W, cfg, 1.0)
        now = mixed_norm(W)
        assert now < previous or now == 0.0
        previous = now


def test_short_row_dies_first():
    W = np.array([[0.3, 0.4], [3.0, 4.0]])
    cfg = RegularizerConfig("mixed", 0.01, 1.0)
    steps = {0: None, 1: None}
    for k in range(1, 2000):
        W = shrink_weights(W, cfg, 1.0)
        for r in (0, 1):
            if steps[r] is None and not W[r].any():
                steps[r] = k
        if steps[1] is not None:
            break
    assert steps[0] is not None and steps[1] is not None
    assert steps[0] < steps[1]


def test_config_validation():
    with pytest.raises(ValueError):
        RegularizerConfig("mixed", -1.0)
    with pytest.raises(ValueError):
        RegularizerConfig("mixed", 1.0, 1.5)
    assert not RegularizerConfig(RegKind.NONE, 1.0).active


matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(-10, 10, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(-5, 5, allow_nan=False))
def test_mixed_norm_homogeneous(W, alpha):
    assert mixed_norm(alpha * W) == pytest.approx(abs(alpha) * mixed_norm(W), rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_mixed_norm_triangle_and_ordering(rows, cols, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(rows, cols)), rng.normal(size=(rows, cols))
    assert mixed_norm(A) >= 0
    assert mixed_norm(A + B) <= mixed_norm(A) + mixed_norm(B) + 1e-12
    assert l2_norm(A) <= mixed_norm(A) + 1e-12
    assert mixed_norm(A) <= l1_norm(A) + 1e-12
