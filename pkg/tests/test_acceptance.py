"""End-to-end acceptance checks.

Each test records exactly one ``ACCEPT <id> PASS|FAIL ...`` line and then
asserts the same condition. The lines are printed in pytest's terminal
summary, so a plain ``pytest -v`` run ends with the scorecard. Criteria 1-4 need MNIST and train full 784-800-800 stacks; the
trained weights are cached under ``$DAN_CACHE_DIR`` (default
``~/.cache/sparsedan``) so reruns only pay for evaluation.
"""

import os
import statistics
import zlib
from pathlib import Path

import numpy as np
import pytest

from sparsedan import experiments as ex
from sparsedan.bitpack import BitVector, forward_binary, forward_real, pack_layer
from sparsedan.cli import main
from sparsedan.modelfile import ModelFileError, deserialize, serialize
from sparsedan.numerics import Rng
from sparsedan.quantize import quantize, sigma, threshold_for_sigma
from sparsedan.rbm import RbmParams, cd_gradient, exact_log_likelihood, prob_h_given_v
from sparsedan.regularizer import RegKind, RegularizerConfig, reg_gradient, reg_value
from sparsedan.stack import DanModel

SEEDS = (0, 1, 2)
LAMBDAS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
GAMMAS = (0.0, 0.5, 1.0)


SCORECARD = []


def report(cid, ok, detail):
    line = f"ACCEPT {cid} {'PASS' if ok else 'FAIL'} {detail}"
    SCORECARD.append(line)
    print(line)
    return ok


def cache():
    return ex.ModelCache(os.environ.get("DAN_CACHE_DIR", Path.home() / ".cache" / "sparsedan"))


# -- shared full-scale runs ---------------------------------------------------------

@pytest.fixture(scope="session")
def table2_runs(data_dir):
    """Per seed: comparison-table rows plus sigma=10% variants for the robustness checks."""
    preset = ex.get_preset("table2")
    runs = {}
    for seed in SEEDS:
        split = ex.load_data(data_dir, preset, seed)
        rows, _ = ex.table2_rows(preset, split, seed, cache())
        dbn = ex.train_model(preset, split, seed, preset.reg(RegKind.NONE, lam=0.0), cache())
        dan = ex.train_model(preset, split, seed, preset.reg(), cache())
        acc = {r[0]: r[-1] for r in rows}
        for name, model in (("DBN", dbn), ("DAN", dan)):
            for mode in "sb":
                q = quantize(model, mode, target_sigma=0.10)
                acc[f"{name}_{mode}@10"] = ex.evaluate(q, split, seed, preset.head)
        runs[seed] = {"rows": rows, "acc": acc}
    return runs


def median(runs, key):
    return statistics.median(r["acc"][key] for r in runs.values())


def per_seed(runs, key):
    return " ".join(f"{r['acc'][key]:.4f}" for r in runs.values())


@pytest.fixture(scope="session")
def lambda_sweep(data_dir):
    preset = ex.get_preset("table2")
    split = ex.load_data(data_dir, preset, SEEDS[0])
    out = {}
    for lam in LAMBDAS:
        model = ex.train_model(preset, split, SEEDS[0], preset.reg(lam=lam), cache())
        out[lam] = ex.layer_stats(model)
    return out


@pytest.fixture(scope="session")
def gamma_sweep(data_dir):
    preset = ex.get_preset("table2")
    split = ex.load_data(data_dir, preset, SEEDS[0])
    return {g: ex.layer_stats(ex.train_model(preset, split, SEEDS[0], preset.reg(gamma=g), cache()))
            for g in GAMMAS}


# -- 1. comparison table ---------------------------------------------------------

@pytest.mark.mnist
@pytest.mark.slow
def test_c1_dbn_accuracy(table2_runs):
    m = median(table2_runs, "DBN")
    assert report("1.DBN", m >= 0.96, f"median={m:.4f} (>=0.960) seeds=[{per_seed(table2_runs, 'DBN')}]")


@pytest.mark.mnist
@pytest.mark.slow
def test_c1_dan_accuracy(table2_runs):
    dan, dbn = median(table2_runs, "DAN"), median(table2_runs, "DBN")
    ok = dan >= 0.96 and dan >= dbn - 0.005
    assert report("1.DAN", ok, f"median={dan:.4f} (>=0.960 and >=DBN-0.005={dbn - 0.005:.4f})"
                  f" seeds=[{per_seed(table2_runs, 'DAN')}]")


@pytest.mark.mnist
@pytest.mark.slow
def test_c1_dan_s_close_to_dan(table2_runs):
    gaps = [abs(r["acc"]["DAN_s"] - r["acc"]["DAN"]) for r in table2_runs.values()]
    g = statistics.median(gaps)
    assert report("1.DAN_s", g <= 0.01, f"median |DAN_s-DAN|={g:.4f} (<=0.010)"
                  f" DAN_s=[{per_seed(table2_runs, 'DAN_s')}]")


@pytest.mark.mnist
@pytest.mark.slow
def test_c1_dan_b_accuracy(table2_runs):
    m = median(table2_runs, "DAN_b")
    assert report("1.DAN_b", m >= 0.925, f"median={m:.4f} (>=0.925) seeds=[{per_seed(table2_runs, 'DAN_b')}]")


@pytest.mark.mnist
@pytest.mark.slow
def test_c1_dan_B_accuracy(table2_runs):
    m = median(table2_runs, "DAN_B")
    assert report("1.DAN_B", m >= 0.915, f"median={m:.4f} (>=0.915) seeds=[{per_seed(table2_runs, 'DAN_B')}]")


@pytest.mark.mnist
@pytest.mark.slow
def test_c1_memory_columns(table2_runs):
    rows = table2_runs[SEEDS[0]]["rows"]
    got = [r[4] for r in rows]
    want = [4950, 4950, 1238, 30, 30]
    assert report("1.memory", got == want, f"got={got} want={want}")


# -- 2 / 3. robustness at sigma = 10% -------------------------------------------------

@pytest.mark.mnist
@pytest.mark.slow
def test_c2_threshold_robustness(table2_runs):
    gaps = [r["acc"]["DAN_s@10"] - r["acc"]["DBN_s@10"] for r in table2_runs.values()]
    g = statistics.median(gaps)
    assert report("2.gap", g >= 0.10, f"median DAN_s@10-DBN_s@10={g:.4f} (>=0.100)"
                  f" DAN_s=[{per_seed(table2_runs, 'DAN_s@10')}] DBN_s=[{per_seed(table2_runs, 'DBN_s@10')}]")


@pytest.mark.mnist
@pytest.mark.slow
def test_c3_binarize_robustness(table2_runs):
    dan_b = median(table2_runs, "DAN_b@10")
    assert report("3.DAN_b@10", dan_b >= 0.88, f"median={dan_b:.4f} (>=0.880)")


@pytest.mark.mnist
@pytest.mark.slow
def test_c3_binarize_gap(table2_runs):
    gap = statistics.median(r["acc"]["DAN_b@10"] - r["acc"]["DBN_b@10"] for r in table2_runs.values())
    assert report("3.gap", gap >= 0.10, f"median DAN_b@10-DBN_b@10={gap:.4f} (>=0.100)"
                  f" DBN_b=[{per_seed(table2_runs, 'DBN_b@10')}]")


# -- 4. sparsity trends -------------------------------------------------------------

@pytest.mark.mnist
@pytest.mark.slow
def test_c4_sigma_falls_with_lambda(lambda_sweep):
    # mean over layers of sigma(u=0.1), lambda from large to small must not decrease
    seq = [float(np.mean([s for s, _, _ in lambda_sweep[lam]])) for lam in LAMBDAS]
    inversions = sum(1 for a, b in zip(seq, seq[1:]) if b < a)
    detail = " ".join(f"{lam:g}:{s:.3f}" for lam, s in zip(LAMBDAS, seq))
    assert report("4.lambda", inversions <= 1, f"inversions={inversions} (<=1) {detail}")


@pytest.mark.mnist
@pytest.mark.slow
def test_c4_second_layer_sparser(lambda_sweep):
    s1, s2 = lambda_sweep[1e-4][0][0], lambda_sweep[1e-4][1][0]
    assert report("4.layers", s2 < s1, f"sigma_l1={s1:.4f} sigma_l2={s2:.4f} (l2<l1)")


@pytest.mark.mnist
@pytest.mark.slow
def test_c4_gamma_trends(gamma_sweep):
    ok = True
    parts = []
    for t in range(2):
        M = [gamma_sweep[g][t][1] for g in GAMMAS]
        MT = [gamma_sweep[g][t][2] for g in GAMMAS]
        ok &= all(b >= a for a, b in zip(M, M[1:])) and all(b <= a for a, b in zip(MT, MT[1:]))
        parts.append(f"l{t + 1} M=" + "/".join(f"{x:.1f}" for x in M) + " MT=" + "/".join(f"{x:.1f}" for x in MT))
    assert report("4.gamma", ok, " ".join(parts))


# -- 5. oracle suites (no MNIST) --------------------------------------------------------

def _brute_marginals(p):
    n, d = p.W.shape
    vs = np.array(np.meshgrid(*[[0.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
    hs = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
    logw = vs @ p.W @ hs.T + (vs @ p.c)[:, None] + (hs @ p.b)[None, :]
    w = np.exp(logw)
    return vs, hs, w


def test_c5_rbm_enumeration():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        p = RbmParams(rng.normal(size=(4, 3)), rng.normal(size=3), rng.normal(size=4))
        vs, hs, w = _brute_marginals(p)
        cond = (w @ hs) / w.sum(axis=1, keepdims=True)
        worst = max(worst, np.abs(prob_h_given_v(p, vs) - cond).max())
        pv = w.sum(axis=1) / w.sum()
        ll = np.array([exact_log_likelihood(p, v[None]) for v in vs])
        worst = max(worst, np.abs(np.exp(ll) - pv).max(), abs(np.exp(ll).sum() - 1.0))
    data = np.array([[1, 1, 0, 0], [1, 0, 1, 0], [0, 0, 1, 1]], dtype=float)
    p = RbmParams(rng.normal(0, 0.5, (4, 3)), rng.normal(0, 0.5, 3), rng.normal(0, 0.5, 4))
    vs, hs, w = _brute_marginals(p)
    z = w.sum()
    exact = np.mean([np.outer(v, prob_h_given_v(p, v)) for v in data], axis=0) - (vs.T @ w @ hs) / z
    r = Rng(3)
    mean = sum(cd_gradient(r, p, data)[0] for _ in range(5000)) / 5000
    cos = float((mean * exact).sum() / (np.linalg.norm(mean) * np.linalg.norm(exact)))
    ok = worst < 1e-12 and cos > 0
    assert report("5.rbm", ok, f"max_err={worst:.2e} (<1e-12) cd1_cosine={cos:.3f} (>0)")


def test_c5_regularizer_finite_differences():
    rng = np.random.default_rng(11)
    worst = {}
    for kind in (RegKind.MIXED, RegKind.L1, RegKind.L2):
        cfg = RegularizerConfig(kind=kind, lam=0.3, gamma=0.4)
        errs = []
        for _ in range(100):
            W = rng.normal(size=(int(rng.integers(2, 7)), int(rng.integers(2, 7))))
            W[np.abs(W) < 1e-3] = 0.1  # keep L1 away from its kink
            fd = np.zeros_like(W)
            h = 1e-6
            for idx in np.ndindex(W.shape):
                up, dn = W.copy(), W.copy()
                up[idx] += h
                dn[idx] -= h
                fd[idx] = (reg_value(up, cfg) - reg_value(dn, cfg)) / (2 * h)
            g = reg_gradient(W, cfg)
            errs.append(np.linalg.norm(g - fd) / np.linalg.norm(fd))
        worst[kind.value] = max(errs)
    ok = all(e < 1e-5 for e in worst.values())
    assert report("5.regularizer", ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (<1e-5)")


def test_c5_sparse_inference_equivalence():
    rng = np.random.default_rng(5)
    real_err, binary_bad = 0.0, 0
    for _ in range(1000):
        n, d = int(rng.integers(1, 150)), int(rng.integers(1, 12))
        W = rng.choice([-1.0, 0.0, 1.0], size=(n, d), p=[0.2, 0.6, 0.2])
        b = rng.integers(-4, 5, d) / 2.0
        layer = pack_layer(W, b)
        v = rng.uniform(0, 1, n)
        dense = 1.0 / (1.0 + np.exp(-(v @ W + b)))
        real_err = max(real_err, np.abs(forward_real(layer, v) - dense).max())
        bits = (rng.uniform(size=n) > 0.5).astype(np.uint8)
        _, h = forward_binary(layer, BitVector.from_bits(bits))
        binary_bad += int(not np.array_equal(h.to_bits(), (bits @ W + b > 0).astype(np.uint8)))
    ok = real_err <= 1e-12 and binary_bad == 0
    assert report("5.sparse-infer", ok, f"real_max_err={real_err:.1e} (<=1e-12) binary_mismatches={binary_bad}/1000")


def test_c5_model_file_integrity():
    rng = np.random.default_rng(9)
    sizes = [20, 9, 70, 5]
    m = DanModel([RbmParams(rng.normal(size=(a, b)).astype(np.float32).astype(float),
                            rng.normal(size=b).astype(np.float32).astype(float),
                            rng.normal(size=a).astype(np.float32).astype(float))
                  for a, b in zip(sizes, sizes[1:])])
    round_trip = True
    for mode in (None, "s", "b", "B"):
        net = m if mode is None else quantize(m, mode, target_sigma=0.3)
        data = serialize(net)
        round_trip &= serialize(deserialize(data)) == data
    data = serialize(quantize(m, "b", target_sigma=0.3))
    caught = 0
    for pos in range(len(data)):
        bad = bytearray(data)
        bad[pos] ^= 1 << (pos % 8)
        try:
            deserialize(bytes(bad))
        except ModelFileError:
            caught += 1
    ok = round_trip and caught == len(data) and zlib.crc32(data[:-4]) == int.from_bytes(data[-4:], "little")
    assert report("5.modelfile", ok, f"round_trip={round_trip} corruptions_detected={caught}/{len(data)}")


def test_c5_sigma_round_trip():
    rng = np.random.default_rng(13)
    bad = 0
    for _ in range(100):
        W = rng.normal(size=(int(rng.integers(1, 50)), int(rng.integers(1, 50))))
        s = float(rng.uniform(0.01, 1.0))
        u = threshold_for_sigma(W, s)
        bad += int(np.count_nonzero(np.abs(W) >= u) != int(np.floor(s * W.size + 1e-9)) or sigma(W, u) > s)
    assert report("5.sigma", bad == 0, f"failures={bad}/100")


# -- 6. determinism ---------------------------------------------------------------------

@pytest.mark.mnist
def test_c6_small_pipeline_deterministic(data_dir, tmp_path):
    outputs = []
    for rep in range(2):
        texts = []
        for argv in (["report"], ["sweep", "--param", "sigma", "--values", "0.1,0.2"]):
            out = tmp_path / f"{argv[0]}_{rep}.csv"
            code = main([*argv, "--preset", "small", "--data-dir", str(data_dir), "--seed", "4",
                         "--out", str(out)])
            assert code == 0
            texts.append(out.read_bytes())
        outputs.append(texts)
    same = outputs[0] == outputs[1]
    assert report("6.determinism", same, f"report+sweep CSV byte-identical across reruns: {same}")
