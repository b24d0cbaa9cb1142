import math

import numpy as np
import pytest

from covertlab.attacks import (SampleBatch, bidegree_count, constant_decoder,
                               identity_decoder, low_degree_score,
                               lspn_iteration_sampler, majority_decoder,
                               masks_up_to, null_sampler,
                               planted_parity_sampler, prc_bound_check,
                               prc_test1, prc_test2, proof_degree, run_attack,
                               shipped_schemes)


def test_mask_enumeration_count():
    for ell, d in ((16, 2), (10, 3), (6, 1)):
        fa = len(masks_up_to(ell, d))
        assert fa == sum(math.comb(ell, i) for i in range(d + 1))
        assert bidegree_count(ell, ell, d) == fa * fa
    assert bidegree_count(16, 16, 2) == 137 * 137


def test_index_cap_rejected():
    rng = np.random.default_rng(0)
    b = null_sampler(16, 16)(rng, 1000)
    with pytest.raises(ValueError):
        low_degree_score(b, b, d=2, cap=100)


def test_engines_agree_exactly():
    rng = np.random.default_rng(1)
    sampler = planted_parity_sampler(10, 0.5, 0b11, 0b101)
    b1 = sampler(rng, 50_000)
    b2 = sampler(rng, 50_000)
    hist = low_degree_score(b1, b2, 2, engine="hist")
    gemm = low_degree_score(b1, b2, 2, engine="gemm")
    assert hist.score == gemm.score           # exact integer arithmetic
    assert np.array_equal(hist.coeffs1, gemm.coeffs1)


def test_planted_parity_noiseless_score_one():
    rng = np.random.default_rng(2)
    sampler = planted_parity_sampler(8, 1.0, 0b1, 0b10)
    res = low_degree_score(sampler(rng, 200_000), sampler(rng, 200_000), 2)
    assert abs(res.score - 1.0) <= 0.05
    top = res.top_coefficients(1)[0]
    assert top[2] == pytest.approx(1.0, abs=0.02)


def test_planted_noisy_parity_score():
    # flip prob q = 0.2 <=> delta = 0.6; E[Score] = delta^2 = 0.36
    rng = np.random.default_rng(3)
    ell, m = 6, 1_000_000
    sampler = planted_parity_sampler(ell, 0.6, 0b1, 0b10)
    res = low_degree_score(sampler(rng, m), sampler(rng, m), 2)
    n_pairs = bidegree_count(ell, ell, 2)
    sd = math.sqrt(2 * 0.36 * n_pairs / m + (n_pairs / m) ** 2)
    assert abs(res.score - 0.36) <= 4 * sd


def test_null_score_scale():
    rng = np.random.default_rng(4)
    ell, m = 10, 200_000
    sampler = null_sampler(ell, ell)
    n_pairs = bidegree_count(ell, ell, 2)
    res = low_degree_score(sampler(rng, m), sampler(rng, m), 2)
    assert abs(res.score) <= 6 * n_pairs / m


def test_score_unbiasedness_over_reps():
    # mean Score over repetitions matches the planted energy within 3 sigma
    rng = np.random.default_rng(5)
    ell, m, delta, reps = 6, 20_000, 0.5, 100
    sampler = planted_parity_sampler(ell, delta, 0b100, 0b11)
    scores = [low_degree_score(sampler(rng, m), sampler(rng, m), 2).score
              for _ in range(reps)]
    n_pairs = bidegree_count(ell, ell, 2)
    sd = math.sqrt(2 * delta ** 2 * n_pairs / m + (n_pairs / m) ** 2)
    assert abs(float(np.mean(scores)) - delta ** 2) <= 3 * sd / math.sqrt(reps)


def test_proof_degree():
    # d = min { t : rho^(t+1) <= delta^2/4 }
    assert proof_degree(0.5, 1.0) == 1       # 0.5^2 = 0.25 <= 0.25
    assert proof_degree(0.8, 0.3) == math.ceil(
        math.log(0.3 ** 2 / 4) / math.log(0.8)) - 1 or proof_degree(0.8, 0.3) >= 1
    d = proof_degree(0.8, 0.3)
    assert 0.8 ** (d + 1) <= 0.0225 < 0.8 ** d


def test_run_attack_verdicts_and_warning():
    rng = np.random.default_rng(6)
    ell, delta, d = 10, 0.4, 2
    n_pairs = bidegree_count(ell, ell, d)
    m = math.ceil(16 * n_pairs / delta ** 4)
    planted = planted_parity_sampler(ell, delta, 0b1000, 0b1)
    rep = run_attack(planted, d, delta, m, rng)
    assert rep.verdict == "protocol" and rep.warning is None
    rep_null = run_attack(null_sampler(ell, ell), d, delta, m, rng)
    assert rep_null.verdict == "null"
    rep_small = run_attack(planted, d, delta, 5000, rng)
    assert rep_small.warning is not None and rep_small.m_recommended == math.ceil(
        16 * n_pairs / delta ** 4)


def test_lspn_iteration_sampler_structure():
    rng = np.random.default_rng(7)
    sampler = lspn_iteration_sampler(n=12, k=1, eta=0.1, p=0.1)
    batch = sampler(rng, 5000)
    assert set(np.unique(batch.keys)) <= {-1, 1}
    assert batch.x.max() < 1 << 12
    assert batch.ell_a == batch.ell_b == 12


def test_batch_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        SampleBatch(np.zeros(3, dtype=np.uint16), np.zeros(2, dtype=np.uint16),
                    np.ones(3, dtype=np.int8), 8, 8)
    rng = np.random.default_rng(8)
    b1 = null_sampler(8, 8)(rng, 100)
    b2 = null_sampler(6, 6)(rng, 100)
    with pytest.raises(ValueError):
        low_degree_score(b1, b2, 1)


# --- public-code tests ---------------------------------------------------------


def test_prc_test1_trivials():
    rng = np.random.default_rng(9)
    uniform = lambda r, m: r.integers(0, 2, size=(m, 33), dtype=np.uint8)
    rate, _ = prc_test1(constant_decoder(1), uniform, 0.1, 20_000, rng)
    assert rate == 0.0
    rate0, _ = prc_test1(majority_decoder(33), uniform, 0.0, 20_000, rng)
    assert rate0 == 0.0


def test_prc_test1_majority_stability():
    # disagreement = (1 - Stab_{0.64}(Maj101))/2 ~ 0.279 at p = 0.1
    rng = np.random.default_rng(10)
    uniform = lambda r, m: r.integers(0, 2, size=(m, 101), dtype=np.uint8)
    rate, _ = prc_test1(majority_decoder(101), uniform, 0.1, 120_000, rng)
    # independent oracle: same quantity via a single q = 2p(1-p) noise draw
    q = 2 * 0.1 * 0.9
    x = rng.integers(0, 2, size=(120_000, 101), dtype=np.uint8)
    z = (rng.random(x.shape) < q).astype(np.uint8)
    f = majority_decoder(101)
    oracle = float((f(x) != f(x ^ z)).mean())
    assert abs(rate - 0.279) <= 0.01
    assert abs(rate - oracle) <= 0.01


def test_prc_test2_trivials():
    rng = np.random.default_rng(11)
    uniform = lambda r, m: r.integers(0, 2, size=(m, 33), dtype=np.uint8)
    bias, _ = prc_test2(constant_decoder(1), uniform, 0.1, 10_000, rng)
    assert bias == 1.0
    bias_bal, _ = prc_test2(majority_decoder(33), uniform, 0.1, 100_000, rng)
    assert abs(bias_bal) <= 0.02
    # repetition-code source, majority decoder: alpha_0 ~ alpha_1 cancel
    rep = lambda r, m: np.repeat(r.integers(0, 2, size=(m, 1), dtype=np.uint8),
                                 101, axis=1)
    bias_rep, _ = prc_test2(majority_decoder(101), rep, 0.1, 100_000, rng)
    assert abs(bias_rep) <= 0.02


def test_prc_bound_check_shipped_schemes():
    rng = np.random.default_rng(12)
    reports = {s.name: prc_bound_check(s, 0.1, 100_000, rng)
               for s in shipped_schemes()}
    triv = reports["trivial-1bit"]
    assert abs(triv["eps_hat"] - 0.1) <= 0.01       # single BSC use: eps = p
    rep = reports["repetition-101"]
    assert rep["eps_hat"] <= 0.01                    # decoding nearly perfect
    assert rep["advantage"] > 0.1                    # far from uniform
    uni = reports["uniform-scheme"]
    assert uni["eps_hat"] >= 0.45                    # no information
    for r in reports.values():
        assert r["dichotomy"]


def test_identity_decoder_sign_convention():
    batch = np.array([[0], [1]], dtype=np.uint8)
    assert list(identity_decoder()(batch)) == [-1, 1]
