import itertools
import math

import numpy as np
import pytest

from covertlab import fixtures
from covertlab.bundle import (AtomPatternTable, BundleOutcome,
                              BundlePublicParams, bundle_size_for, compute_bsc,
                              decode, embed, embed_error_trials,
                              embed_on_candidates, embed_stream,
                              fixed_bundle_error_trials, lhl_epsilon)
from covertlab.mockmodel import ResponseLaw
from covertlab.primitives import ExtractorSeed, ext_bit
from covertlab.stats import wilson_interval

W = 12


def _law(c=2, content=5):
    model = fixtures.coin_model(c, content, extra_prompts=False)
    return ResponseLaw(model, "talk", W)


def _pp(rng, L, c=2.0, seed=None):
    if seed is None:
        return BundlePublicParams.fresh(W, L, c, rng)
    return BundlePublicParams(seed, int(rng.integers(0, 2)), L, c)


def test_lhl_epsilon_and_size_rule():
    assert lhl_epsilon(1) == 0.5
    assert lhl_epsilon(3) == 0.25
    assert bundle_size_for(16, 2) == 1024   # ceil(8*16 / (1/8))
    assert bundle_size_for(16, 1) == 512


def test_point_mass_error_half_over_mask():
    # degenerate I* = [L]: published is the point; decode errs for exactly
    # one of the two mask values
    rng = np.random.default_rng(0)
    point = 7
    errors = []
    for r in (0, 1):
        pp = BundlePublicParams(ExtractorSeed.from_ints(5, 0, W), r, 4, 0.0)
        out = embed(pp, 0, lambda _: point, rng)
        assert out.published == point
        assert out.partition_sizes[2] == 4
        assert out.chosen_branch == "star"
        errors.append(decode(pp, out.published) != 0)
    assert sorted(errors) == [False, True]


def test_l1_bundle_p_half():
    rng = np.random.default_rng(1)
    est = compute_bsc([3], W)
    assert est.p == pytest.approx(0.5)


def test_balanced_seed_gives_empty_star_and_correct_decode():
    # per-seed statement: whenever a seed balances the labels, I* is empty
    # and decoding is always correct
    rng = np.random.default_rng(2)
    law = _law()
    pp = None
    for _ in range(100):
        cand = law.encodings[law.draw_indices(rng, 4)]
        for a in range(1, 1 << W):
            seed = ExtractorSeed.from_ints(a, 0, W)
            labels = [ext_bit(seed, int(x)) for x in cand]
            if sum(labels) == 2:
                pp = BundlePublicParams(seed, 0, 4, 2.0)
                for b in (0, 1):
                    out = embed_on_candidates(pp, b, cand, rng)
                    assert out.partition_sizes[2] == 0
                    assert out.decode_correct
                    assert decode(pp, out.published) == b
                break
        if pp is not None:
            break
    assert pp is not None


def test_full_space_bundle_exact_p_is_offset_artifact():
    # a bundle holding all of {0,1}^w once balances under every seed with
    # a != 0; only a = 0 contributes, so p = 2^-(w+1) exactly
    w = 6
    candidates = np.arange(1 << w, dtype=np.uint64)
    est = compute_bsc(candidates, w)
    assert est.p == pytest.approx(2.0 ** -(w + 1), abs=1e-15)


def test_exact_matches_pattern_table_and_monte_carlo():
    rng = np.random.default_rng(3)
    law = _law(3)
    table = AtomPatternTable(law.encodings, W)
    idx = law.draw_indices(rng, 64)
    cand = law.encodings[idx]
    counts = np.bincount(idx, minlength=len(law))
    exact = compute_bsc(cand, W).p
    assert table.exact_p(counts) == pytest.approx(exact, abs=1e-12)
    mc = compute_bsc(cand, W, mode="monte_carlo", rng=rng, mc_seed_draws=20_000)
    assert mc.ci[0] <= exact <= mc.ci[1]
    trials = 50_000
    errs = fixed_bundle_error_trials(counts, table, 0, trials, rng)
    lo, hi = wilson_interval(int(errs.sum()), trials)
    assert lo <= exact <= hi


def test_exact_mode_cap():
    with pytest.raises(ValueError):
        compute_bsc([1, 2], width=25)
    est = compute_bsc(np.array([1, 2], dtype=np.uint64), width=25,
                      mode="monte_carlo", rng=np.random.default_rng(0),
                      mc_seed_draws=2000)
    assert 0.0 <= est.p <= 0.5


def _oracle_two_atom_law(pp, atoms, probs, L, b):
    """Tuple-enumeration oracle for a fixed pp and fixed b."""
    labels = {a: ext_bit(pp.seed, a) for a in atoms}
    beta = b ^ pp.mask_bit
    law = {a: 0.0 for a in atoms}
    for combo in itertools.product(atoms, repeat=L):
        p_tuple = math.prod(probs[atoms.index(a)] for a in combo)
        lab = [labels[a] for a in combo]
        pos0 = [j for j, l in enumerate(lab) if l == 0]
        pos1 = [j for j, l in enumerate(lab) if l == 1]
        m = min(len(pos0), len(pos1))
        star = (pos0[m:] if len(pos0) > len(pos1) else pos1[m:])
        for j in star:
            law[combo[j]] += p_tuple / L
        for j in (pos1 if beta else pos0)[:m]:
            law[combo[j]] += p_tuple * 2 / L
    return law


def test_two_atom_exact_law_and_symmetry():
    # D uniform on two strings with opposite labels, L = 2: enumerate all
    # (candidates, J-choice, mask) outcomes
    atoms = [5, 6]
    probs = [0.5, 0.5]
    seed = None
    for a in range(1, 1 << W):
        s = ExtractorSeed.from_ints(a, 0, W)
        if ext_bit(s, atoms[0]) != ext_bit(s, atoms[1]):
            seed = s
            break
    for r in (0, 1):
        pp = BundlePublicParams(seed, r, 2, 1.0)
        mix = {a: 0.0 for a in atoms}
        for b in (0, 1):
            law = _oracle_two_atom_law(pp, atoms, probs, 2, b)
            for a in atoms:
                mix[a] += 0.5 * law[a]
        for a, p in zip(atoms, probs):
            assert mix[a] == pytest.approx(p, abs=1e-15)


def test_error_symmetry_exact():
    # enumerate the mask bit: error probability equal for b = 0 and b = 1
    rng = np.random.default_rng(4)
    law = _law()
    idx = law.draw_indices(rng, 16)
    cand = law.encodings[idx]
    errors = {0: 0.0, 1: 0.0}
    for a in range(1 << W):
        seed = ExtractorSeed.from_ints(a, 0, W)
        labels = np.array([ext_bit(seed, int(x)) for x in cand])
        n1 = int(labels.sum())
        n0 = 16 - n1
        nstar = abs(n0 - n1)
        maj = 1 if n1 > n0 else 0
        # one-sided pre-mask error: for a fixed (bundle, seed), at most one
        # value of the masked bit can decode incorrectly
        can_err = [1 for beta in (0, 1) if nstar and beta != maj]
        assert sum(can_err) <= 1
        for r in (0, 1):
            for b in (0, 1):
                beta = b ^ r
                if nstar and beta != maj:
                    errors[b] += nstar / 16
    assert errors[0] == pytest.approx(errors[1])


def test_feedback_soundness_and_one_sided():
    rng = np.random.default_rng(5)
    law = _law()
    sampler = lambda r: int(law.encodings[law.draw_index(r)])
    for _ in range(300):
        pp = _pp(rng, 8)
        b = int(rng.integers(0, 2))
        out = embed(pp, b, sampler, rng)
        assert out.decode_correct == (decode(pp, out.published) == b)
        if out.chosen_branch == "labeled":
            assert out.decode_correct
        n0, n1, nstar = out.partition_sizes
        assert nstar == abs(n0 - n1)


def test_embed_error_trials_matches_mean_p():
    rng = np.random.default_rng(6)
    law = _law()
    table = AtomPatternTable(law.encodings, W)
    L = 64
    trials = 40_000
    errs = embed_error_trials(law, L, 1, trials, rng)
    rate = errs.mean()
    # expected error = E over bundles of exact p; estimate that mean by
    # direct enumeration over a sample of bundles
    ps = [table.exact_p(np.bincount(law.draw_indices(rng, L), minlength=4))
          for _ in range(3000)]
    lo, hi = wilson_interval(float(errs.sum()), trials)
    assert lo - 0.01 <= float(np.mean(ps)) <= hi + 0.01


def test_embed_stream_contracts():
    rng = np.random.default_rng(7)
    law = _law()
    sampler = lambda r: int(law.encodings[law.draw_index(r)])
    point_sampler = lambda r: 9

    # zero-length stream
    outs, fb, ps = embed_stream([], [], [], rng)
    assert outs == [] and fb == [] and ps == []

    # deterministic positions: p = 1/2 each, feedback ~ Bernoulli(1/2)
    n = 400
    pps = [_pp(rng, 4, 0.0) for _ in range(n)]
    bits = rng.integers(0, 2, n)
    outs, fb, ps = embed_stream(pps, bits, [point_sampler] * n, rng)
    assert all(p == pytest.approx(0.5) for p in ps)
    lo, hi = wilson_interval(sum(fb), n)
    assert lo <= 0.5 <= hi

    # params reuse rejected
    pp = _pp(rng, 4)
    with pytest.raises(ValueError):
        embed_stream([pp, pp], [0, 1], [sampler, sampler], rng)

    # length mismatch rejected
    with pytest.raises(ValueError):
        embed_stream([pp], [0, 1], [sampler, sampler], rng)


def test_independent_value_collisions_allowed():
    # two fresh params with identical field values are distinct objects
    seed = ExtractorSeed.from_ints(3, 1, W)
    pp1 = BundlePublicParams(seed, 0, 2, 1.0)
    pp2 = BundlePublicParams(seed, 0, 2, 1.0)
    assert pp1.key() != pp2.key()


def test_outcome_invariants_enforced():
    with pytest.raises(ValueError):
        BundleOutcome(0, 0, True, (3, 1, 1), "labeled", (0,))
    with pytest.raises(ValueError):
        BundleOutcome(0, 0, False, (2, 2, 0), "labeled", (0,))


def test_wrong_bundle_size_rejected():
    rng = np.random.default_rng(8)
    pp = _pp(rng, 4)
    with pytest.raises(ValueError):
        embed_on_candidates(pp, 0, np.array([1, 2], dtype=np.uint64), rng)
