import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covertlab import prke
from covertlab.primitives import ChannelSpec
from covertlab.signaling import (beta_for_p, bhattacharyya_rate,
                                 build_h_table, compile_prke,
                                 compiled_agreement_batch, compiled_budget,
                                 exact_majority_error, majority_error_batch,
                                 majority_n_for, n_per_bit_for,
                                 next_bias_majority, optimal_error_batch,
                                 optimal_next_biases, posterior_update,
                                 realize_bias, run_majority_signaling,
                                 run_optimal_signaling, sigma)
from covertlab.stats import wilson_interval


def test_beta_identity():
    for p in (0.1, 0.2, 0.3):
        beta = beta_for_p(p)
        assert float(sigma(2 * beta)) == pytest.approx(1 - p, abs=1e-12)
    assert beta_for_p(0.4999) == pytest.approx(0.0, abs=1e-3)
    # p = 1/(1+e^2) gives beta = 1 (numeric inversion of the closed form)
    assert beta_for_p(1.0 / (1.0 + math.e ** 2)) == pytest.approx(1.0)
    for bad in (0.0, 0.5, 0.6):
        with pytest.raises(ValueError):
            beta_for_p(bad)


def test_h_table_identities():
    t0 = build_h_table(8, 0.0)
    for r in range(9):
        assert np.allclose(t0.row(r), 1.0)
    beta = beta_for_p(0.2)
    t = build_h_table(8, beta)
    for r in range(9):
        row = t.row(r)
        assert np.allclose(row + row[::-1], 2.0, atol=1e-12)
    # H[1, 0] = sigma(beta) + sigma(-beta) = 1
    assert t.value(1, 0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        build_h_table(0, 1.0)
    with pytest.raises(ValueError):
        t.value(3, 7)


def test_next_bias_trivials():
    t0 = build_h_table(8, 0.0)
    assert next_bias_majority(t0, 5, 1) == pytest.approx(0.5)
    # at s = 0 the row symmetry H[r,1] + H[r,-1] = 2 pins the denominator,
    # so q(r, 0) = H[r-1, 1]/2 -- strictly above 1/2 (the conditioned walk
    # drifts toward the terminal event)
    t = build_h_table(8, beta_for_p(0.3))
    for r in (1, 4, 8):
        q = next_bias_majority(t, r, 0)
        assert q == pytest.approx(t.value(r - 1, 1) / 2.0, abs=1e-12)
        assert q > 0.5
    with pytest.raises(ValueError):
        next_bias_majority(t, 0, 0)


def test_odds_ratio_bound_sampled():
    p = 0.25
    beta = beta_for_p(p)
    t = build_h_table(32, beta)
    lo, hi = math.exp(-2 * beta), math.exp(2 * beta)
    for r in range(1, 33):
        for s in range(-(32 - r), 33 - r):
            q = next_bias_majority(t, r, s)
            assert p - 1e-12 <= q <= 1 - p + 1e-12
            assert lo - 1e-9 <= q / (1 - q) <= hi + 1e-9


def test_realize_bias():
    assert realize_bias(0.2, 0.2) == 0.0
    assert realize_bias(0.8, 0.2) == 1.0
    assert realize_bias(0.5, 0.17) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        realize_bias(0.1, 0.2)
    with pytest.raises(ValueError):
        realize_bias(0.95, 0.1)


def test_majority_requires_odd_n():
    with pytest.raises(ValueError):
        run_majority_signaling(1, 4, ChannelSpec.constant(0.1, 4),
                               np.random.default_rng(0))


def test_majority_single_step_error_exact():
    # n = 1: error = sigma(-beta) exactly
    p = 0.2
    beta = beta_for_p(p)
    expected = float(sigma(-beta))
    assert exact_majority_error(1, beta) == pytest.approx(expected, abs=1e-12)
    rng = np.random.default_rng(1)
    trials = 40_000
    errors = majority_error_batch(1, p, trials, rng)
    lo, hi = wilson_interval(errors, trials)
    assert lo <= expected <= hi


def test_majority_error_matches_exact_formula_any_schedule():
    # the sequential sampler realizes the target law exactly, so the error
    # matches E[sigma(-beta |W_n|)] even on a noiseless channel
    p = 0.2
    beta = beta_for_p(p)
    n = 51
    exact = exact_majority_error(n, beta)
    rng = np.random.default_rng(2)
    trials = 60_000
    table = build_h_table(n, beta)
    errs = 0
    spec = ChannelSpec.constant(0.0, n, bound=p)
    for _ in range(300):
        run = run_majority_signaling(1, n, spec, rng, table=table)
        errs += run.decoded != 1
    # scalar + batch agree with the closed form
    batch_errs = majority_error_batch(n, p, trials, rng)
    lo, hi = wilson_interval(batch_errs, trials)
    assert lo <= exact <= hi
    lo2, hi2 = wilson_interval(errs, 300)
    assert lo2 <= exact <= hi2


def test_majority_n_for_monotone():
    n = majority_n_for(0.001, 1e-3)
    beta = beta_for_p(0.001)
    assert n % 2 == 1
    assert exact_majority_error(n, beta) <= 1e-3
    assert exact_majority_error(n - 2, beta) > 1e-3


def test_optimal_biases_trivialities():
    q_plus, q_minus = optimal_next_biases(0.5, 0.1)
    assert (q_plus, q_minus) == (pytest.approx(0.9), pytest.approx(0.1))
    q_plus, _ = optimal_next_biases(1.0, 0.1)
    assert q_plus == pytest.approx(0.5)
    with pytest.raises(ValueError):
        optimal_next_biases(0.5, 0.6)


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.499))
@settings(max_examples=300)
def test_fairness_identity(w, p):
    q_plus, q_minus = optimal_next_biases(w, p)
    assert abs(w * q_plus + (1 - w) * q_minus - 0.5) <= 1e-12
    assert 0.0 < q_plus < 1.0 and 0.0 < q_minus < 1.0
    pinned, other = (q_minus, q_plus) if w >= 0.5 else (q_plus, q_minus)
    assert pinned == p
    assert 0.5 - 1e-12 <= other <= 1 - p + 1e-12


def test_posterior_update_examples():
    assert posterior_update(0.5, 0.5, 1) == pytest.approx(0.5)
    assert posterior_update(0.5, 0.5, -1) == pytest.approx(0.5)
    assert posterior_update(0.5, 0.8, 1) == pytest.approx(0.8)


def test_sender_receiver_posterior_identity():
    # the receiver replaying the public rule reproduces the sender's w_t
    rng = np.random.default_rng(3)
    p = 0.15
    for _ in range(200):
        n = 25
        run = run_optimal_signaling(1 if rng.random() < 0.5 else -1, n,
                                    ChannelSpec.constant(p, n), rng)
        w = 0.5
        for (w_sender, q_plus, q_minus, y) in run.trajectory:
            w = posterior_update(w, q_plus, y)
            # trajectory stores the post-update posterior
            assert w == pytest.approx(w_sender, abs=1e-9)


def test_optimal_zero_horizon_error_half():
    rng = np.random.default_rng(4)
    errs = 0
    trials = 2000
    for _ in range(trials):
        o = 1 if rng.random() < 0.5 else -1
        run = run_optimal_signaling(o, 0, ChannelSpec.constant(0.1, 0), rng)
        errs += run.decoded != o
    lo, hi = wilson_interval(errs, trials)
    assert lo <= 0.5 <= hi


def test_min_transcript_probability_lower_bound():
    # every endpoint reachable with probability >= p^n under either objective
    p = 0.2
    for n in range(1, 9):
        for o in (1, -1):
            min_prob = 1.0
            for word in range(1 << n):
                w = 0.5
                prob = 1.0
                for t in range(n):
                    q_plus, q_minus = optimal_next_biases(w, p)
                    q = q_plus if o == 1 else q_minus
                    y = 1 if (word >> t) & 1 else -1
                    prob *= q if y == 1 else 1 - q
                    w = posterior_update(w, q_plus, y)
                min_prob = min(min_prob, prob)
            assert min_prob >= p ** n - 1e-15


def test_optimal_error_bound_small_n():
    rng = np.random.default_rng(5)
    p, n, trials = 0.1, 20, 40_000
    errs = optimal_error_batch(n, p, trials, rng)
    bound = 0.5 * bhattacharyya_rate(p) ** n
    lo, hi = wilson_interval(errs, trials)
    assert lo <= bound   # observed error cannot exceed the bound beyond CI


def test_n_per_bit_helper():
    p, T, eta = 0.1, 64, 0.01
    n = n_per_bit_for(p, T, eta)
    lam = bhattacharyya_rate(p)
    assert 0.5 * lam ** n <= eta / T < 0.5 * lam ** (n - 1)
    n2, total = compiled_budget(p, T, eta)
    assert (n2, total) == (n, n * T)


@pytest.mark.parametrize("backend_kind", ["ideal", "toy_group"])
def test_compile_prke_session(backend_kind):
    rng = np.random.default_rng(6)
    backend = prke.make_backend(backend_kind)
    T = 2 * backend.msg_bits
    p = 0.05
    n_per_bit = n_per_bit_for(p, T, 0.001)
    spec = ChannelSpec.constant(p, n_per_bit)
    session = compile_prke(backend, "optimal", n_per_bit, lambda i: spec, rng)
    assert session.channel_uses == n_per_bit * T
    assert session.agreed     # per-bit error ~ 7e-6 at these settings


def test_compile_prke_majority_needs_odd():
    backend = prke.IdealBackend(msg_bits=2)
    spec = ChannelSpec.constant(0.1, 4)
    with pytest.raises(ValueError):
        compile_prke(backend, "majority", 4, lambda i: spec,
                     np.random.default_rng(0))


def test_batch_engines_consistent_with_scalar():
    rng = np.random.default_rng(7)
    p, n, trials = 0.2, 15, 30_000
    batch_rate = majority_error_batch(n, p, trials, rng) / trials
    exact = exact_majority_error(n, beta_for_p(p))
    assert abs(batch_rate - exact) <= 4 * math.sqrt(exact * (1 - exact) / trials)
    agreed = compiled_agreement_batch(4, 21, p, 400, rng, scheme="majority")
    assert agreed / 400 >= (1 - exact_majority_error(21, beta_for_p(p))) ** 4 - 0.08
