import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covertlab.lspn import (DESK_PARAMS, LspnParams, derive_bits, ell_min,
                            final_bit_advantage, final_decision, final_message,
                            generate_matrix, pack_rows, per_bit_xor_bias,
                            round_messages, run_protocol, unpack_rows,
                            xor_bias_trials)
from covertlab.primitives import BitVector
from covertlab.stats import frequency_battery, wilson_interval


def test_params_validation():
    with pytest.raises(ValueError):
        LspnParams(n=64, k=65, eta=0.1, ell=10_000, security=8, p=0.1)
    with pytest.raises(ValueError):
        LspnParams(n=64, k=2, eta=0.1, ell=4, security=8, p=0.1)
    lo = ell_min(3, 0.0625, 0.0625, 8)
    assert 5300 < lo < 5500
    assert DESK_PARAMS.ell >= lo


def test_bias_closed_forms():
    # zeta = 2 tau theta with tau = theta = 0.4375 at eta = p = 1/16
    zeta = 2 * 0.4375 * 0.4375
    assert per_bit_xor_bias(3, 0.0625, 0.0625) == pytest.approx(
        2 ** 5 * zeta ** 6)
    assert final_bit_advantage(3, 0.0625, 0.0625) == pytest.approx(
        0.5 * (0.875 * 0.875) ** 7)


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, size=(5, 128), dtype=np.uint8)
    assert np.array_equal(unpack_rows(pack_rows(bits), 128), bits)


@given(st.integers(0, 2**30))
@settings(max_examples=20)
def test_pack_xor_homomorphic(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, size=(1, 64), dtype=np.uint8)
    b = rng.integers(0, 2, size=(1, 64), dtype=np.uint8)
    assert np.array_equal(unpack_rows(pack_rows(a) ^ pack_rows(b), 64), a ^ b)


def test_round_messages_zero_noise_zero_secret():
    params = LspnParams(n=64, k=0, eta=0.0, ell=ell_min(0, 0.0, 0.0, 4),
                        security=4, p=0.0)
    c = generate_matrix(64, np.random.default_rng(1))
    data = round_messages(c, params, np.random.default_rng(2))
    assert data["alice_sketch"] == BitVector(np.zeros(64, dtype=np.uint8))


def test_round_messages_matches_gf2_oracle():
    # eta = 0: a = C s exactly, against an independent dense multiply
    params = LspnParams(n=64, k=3, eta=0.0, ell=ell_min(3, 0.0, 0.0, 4),
                        security=4, p=0.0)
    c = generate_matrix(64, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    data = round_messages(c, params, rng)
    s = np.zeros(64, dtype=np.uint8)
    s[data["s_idx"]] = 1
    assert np.array_equal(data["alice_sketch"].bits, (c @ s) % 2)
    r = np.zeros(64, dtype=np.uint8)
    r[data["r_idx"]] = 1
    assert np.array_equal(data["bob_sketch"].bits, (r @ c) % 2)


def test_noise_rate_ci():
    params = LspnParams(n=64, k=1, eta=0.2, ell=ell_min(1, 0.2, 0.0, 4),
                        security=4, p=0.0)
    c = generate_matrix(64, np.random.default_rng(5))
    rng = np.random.default_rng(6)
    flips = 0
    trials = 1500
    for _ in range(trials):
        data = round_messages(c, params, rng)
        s = np.zeros(64, dtype=np.uint8)
        s[data["s_idx"]] = 1
        e = data["alice_sketch"].bits ^ ((c @ s) % 2)
        flips += int(e.sum())
    lo, hi = wilson_interval(flips, trials * 64)
    assert lo <= 0.2 <= hi


def test_derive_bits_noiseless_identity():
    # eta = p = 0: k_A = k_B = r^T C s for every iteration
    params = LspnParams(n=64, k=2, eta=0.0, ell=ell_min(2, 0.0, 0.0, 4),
                        security=4, p=0.0)
    c = generate_matrix(64, np.random.default_rng(7))
    rng = np.random.default_rng(8)
    for _ in range(50):
        data = round_messages(c, params, rng)
        k_a, k_b = derive_bits(data, data["alice_sketch"], data["bob_sketch"])
        s = np.zeros(64, dtype=np.uint8)
        s[data["s_idx"]] = 1
        r = np.zeros(64, dtype=np.uint8)
        r[data["r_idx"]] = 1
        expected = int((r @ ((c @ s) % 2)) % 2)
        assert k_a == k_b == expected


def test_weight_zero_secret_bit_is_channel_only():
    params = LspnParams(n=64, k=0, eta=0.3, ell=ell_min(0, 0.3, 0.0, 4),
                        security=4, p=0.0)
    c = generate_matrix(64, np.random.default_rng(9))
    data = round_messages(c, params, np.random.default_rng(10))
    k_a, _ = derive_bits(data, data["alice_sketch"], data["bob_sketch"])
    assert k_a == 0    # weight-0 inner product


def test_xor_bias_closed_form_desk_point():
    # n = 64, k = 2, eta = p = 0.125: piling-up gives 1/2 - 2^(2k-1) zeta^(2k)
    params = LspnParams(n=64, k=2, eta=0.125, ell=ell_min(2, 0.125, 0.125, 8),
                        security=8, p=0.125)
    trials = 1_000_000
    bias = xor_bias_trials(params, trials, np.random.default_rng(11))
    closed = 0.5 - per_bit_xor_bias(2, 0.125, 0.125)
    lo, hi = wilson_interval(bias * trials, trials)
    assert lo <= closed <= hi


def test_final_message_paths():
    rng = np.random.default_rng(12)
    k_a = BitVector(rng.integers(0, 2, 4096, dtype=np.uint8))
    assert final_message(k_a, 0, 0.0, rng) == k_a
    t = final_message(k_a, 1, 0.0, rng)
    assert frequency_battery(t.bits)["pass"]
    masked = final_message(k_a, 0, 0.125, rng)
    dist = int((masked.bits ^ k_a.bits).sum())
    lo, hi = wilson_interval(dist, 4096)
    assert lo <= 0.125 <= hi


def test_final_decision_strict_threshold():
    # ell = 128, lambda = 8: threshold = 64 - 32 = 32, strict inequality
    k_b = BitVector(np.zeros(128, dtype=np.uint8))
    at = np.zeros(128, dtype=np.uint8)
    at[:32] = 1
    assert final_decision(BitVector(at), k_b, 8) == 0
    at[32] = 1
    assert final_decision(BitVector(at), k_b, 8) == 1
    assert final_decision(k_b, k_b, 8) == 0
    ones = BitVector(np.ones(128, dtype=np.uint8))
    assert final_decision(ones, k_b, 8) == 1
    with pytest.raises(ValueError):
        final_decision(BitVector([1]), k_b, 8)


def test_noiseless_protocol_always_agrees():
    params = LspnParams(n=64, k=1, eta=0.0, ell=ell_min(1, 0.0, 0.0, 8),
                        security=8, p=0.0)
    for i in range(50):
        session = run_protocol(params, np.random.default_rng(100 + i))
        assert session.agreed


def test_desk_session_fields():
    session = run_protocol(DESK_PARAMS, np.random.default_rng(13))
    assert session.k_a.shape == (DESK_PARAMS.ell,)
    assert session.kappa_a in (0, 1) and session.kappa_b in (0, 1)
    bits = session.transcript_bits(limit=10_000)
    assert bits.shape == (10_000,)


def _piling_up_enumeration(biases):
    """Exact distribution of the XOR of independent bits, by convolution."""
    p0 = 1.0
    for b in biases:
        q0 = 0.5 + b       # P(bit = 0)
        p0 = p0 * q0 + (1 - p0) * (1 - q0)
    return abs(p0 - 0.5)


def test_piling_up_closed_form():
    rng = np.random.default_rng(14)
    for n in (1, 3, 7, 20):
        biases = rng.uniform(-0.5, 0.5, n)
        closed = 2.0 ** (n - 1) * np.prod(np.abs(biases))
        assert _piling_up_enumeration(biases) == pytest.approx(closed, abs=1e-12)
