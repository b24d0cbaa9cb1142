import numpy as np
import pytest

from covertlab.prke import (TOY_G, TOY_P, TOY_Q, IdealBackend, ToyGroupBackend,
                            brute_force_dlog, decode_element, element_from_index,
                            encode_element, encoding_tv, make_backend,
                            prke_derive, prke_messages, qr_index, run_noiseless)
from covertlab.stats import chi_square_uniform, frequency_battery


def test_group_constants():
    assert TOY_P == 2 * TOY_Q + 1
    assert pow(TOY_G, TOY_Q, TOY_P) == 1      # g generates the order-q subgroup
    assert pow(TOY_G, 1, TOY_P) != 1


def test_qr_index_bijection_sampled():
    rng = np.random.default_rng(0)
    for e in rng.integers(1, TOY_Q, 300):
        x = pow(TOY_G, int(e), TOY_P)
        idx = qr_index(x)
        assert 0 <= idx < TOY_Q
        assert element_from_index(idx) == x


def test_encode_decode_roundtrip_and_range():
    rng = np.random.default_rng(1)
    k_max = (1 << 32) // TOY_Q
    for e in rng.integers(1, TOY_Q, 200):
        x = pow(TOY_G, int(e), TOY_P)
        enc = encode_element(x, rng)
        assert 0 <= enc < k_max * TOY_Q       # below the largest multiple of q
        assert decode_element(enc) == x


def test_encoding_tv_exact():
    assert encoding_tv() == ((1 << 32) % TOY_Q) / 2.0 ** 32
    assert encoding_tv() <= 2.0 ** -16


def test_encoding_partitions_by_group_enumeration():
    # enumeration argument: each group index owns exactly k_max encodings
    # {idx + q j}, all below M = q k_max, pairwise disjoint across indices;
    # so a uniform element yields a uniform value on [0, M) and the distance
    # from uniform width-32 strings is exactly (2^32 - M) / 2^32
    k_max = (1 << 32) // TOY_Q
    M = k_max * TOY_Q
    assert TOY_Q * k_max == M <= (1 << 32)
    for idx in (0, 1, 12345, TOY_Q - 1):
        values = [idx + TOY_Q * j for j in range(k_max)]
        assert values[-1] < M
        assert all(v % TOY_Q == idx for v in values)
    exact_tv = ((1 << 32) - M) / 2.0 ** 32
    assert encoding_tv() == exact_tv


def test_ideal_backend_correct_and_uniform():
    backend = IdealBackend(msg_bits=8, key_bits=64)
    rng = np.random.default_rng(2)
    values = []
    for _ in range(2000):
        s = run_noiseless(backend, rng)
        assert s.agreed
        values.append(s.transcript["sent_a"].to_int())
    # enumerable uniformity at ell_msg = 8
    _, p = chi_square_uniform(np.bincount(values, minlength=256))
    assert p > 1e-6


def test_ideal_transcript_battery():
    backend = IdealBackend(msg_bits=64)
    rng = np.random.default_rng(3)
    bits = np.concatenate([
        np.concatenate([m.bits for m in prke_messages(backend, rng)[:2]])
        for _ in range(1000)])
    assert frequency_battery(bits)["pass"]


def test_toy_group_agreement_10k():
    backend = ToyGroupBackend()
    rng = np.random.default_rng(4)
    failures = 0
    for _ in range(10_000):
        m_a, m_b, sa, sb = backend.messages(rng)
        k_a = backend.derive(sa, m_b.bits, "A")
        k_b = backend.derive(sb, m_a.bits, "B")
        failures += k_a != k_b
    assert failures == 0


def test_nonadaptivity_definitional():
    # Bob's message is a function of his own stream only: recomputing it in
    # isolation (never touching Alice's stream) gives the identical message
    backend = ToyGroupBackend()
    base = np.random.default_rng(5)
    m_a, m_b, _, sb = backend.messages(base)
    replay = np.random.default_rng(5)
    _, rng_b = replay.spawn(2)
    m_b_alone, sb_alone = backend.message_for("B", rng_b)
    assert m_b_alone == m_b
    assert sb_alone == sb


def test_derive_is_deterministic_replay():
    backend = ToyGroupBackend()
    rng = np.random.default_rng(6)
    m_a, m_b, sa, _ = backend.messages(rng)
    k1 = prke_derive(backend, sa, m_b.bits, "A")
    k2 = prke_derive(backend, sa, m_b.bits, "A")
    assert k1 == k2


def test_corrupted_message_changes_key():
    rng = np.random.default_rng(7)
    for backend in (ToyGroupBackend(), IdealBackend()):
        diffs = 0
        trials = 200
        for _ in range(trials):
            m_a, m_b, sa, sb = backend.messages(rng)
            flipped = m_b.bits.copy()
            pos = int(rng.integers(0, len(flipped)))
            flipped[pos] ^= 1
            k_good = backend.derive(sa, m_b.bits, "A")
            k_bad = backend.derive(sa, flipped, "A")
            diffs += k_good != k_bad
        assert diffs == trials    # a flipped bit always lands in a new class


def test_shared_value_matches_dlog_oracle():
    backend = ToyGroupBackend()
    rng = np.random.default_rng(8)
    m_a, m_b, sa, sb = backend.messages(rng)
    elem_a = element_from_index(m_a.to_int() % TOY_Q)
    a = brute_force_dlog(elem_a)
    assert a == sa["exp"] % TOY_Q
    elem_b = element_from_index(m_b.to_int() % TOY_Q)
    shared_via_oracle = pow(elem_b, a, TOY_P)
    assert shared_via_oracle == pow(pow(TOY_G, sb["exp"], TOY_P), sa["exp"], TOY_P)


def test_malformed_message_rejected():
    backend = IdealBackend(msg_bits=16)
    rng = np.random.default_rng(9)
    _, _, sa, _ = backend.messages(rng)
    with pytest.raises(ValueError):
        backend.derive(sa, np.zeros(8, dtype=np.uint8), "A")
    with pytest.raises(ValueError):
        make_backend("nope")
