"""Smoke tests for experiment-level interfaces not covered by the acceptance
gate: custom crossover schedules, parameter overrides, and the exchanged-key
overlay mode."""

import numpy as np

from covertlab.experiments import (EXPERIMENTS, _embed_law_bruteforce,
                                   _embed_law_oracle, _micro_pipeline_law,
                                   exp_lspn, exp_sharedkey_overlay,
                                   exp_signaling_error)
from covertlab.stats import tv_distance_exact


def test_signaling_error_custom_schedule():
    params = dict(EXPERIMENTS["signaling-error"].defaults)
    params.update({"scheme": "majority", "n": 11, "p": 0.2,
                   "crossovers": [0.0, 0.1] * 5 + [0.2], "trials": 3000})
    metrics = exp_signaling_error(params, np.random.SeedSequence(1))
    assert metrics[0].passed


def test_lspn_param_override_small():
    params = dict(EXPERIMENTS["lspn-correctness"].defaults)
    params.update({"n": 64, "k": 1, "eta": 0.0625, "p": 0.0625,
                   "ell": 600, "security": 4, "runs": 40,
                   "bias_trials": 50_000, "battery_bits": 20_000})
    metrics = exp_lspn(params, np.random.SeedSequence(2))
    by_id = {m.metric_id: m for m in metrics}
    assert by_id["agreement_rate"].value >= 0.95
    assert by_id["xor_bias"].passed


def test_sharedkey_overlay_exchanged_mode():
    params = dict(EXPERIMENTS["sharedkey-overlay"].defaults)
    params.update({"runs": 10, "rounds": 8, "tokens_per_round": 16,
                   "identity_checks": 2, "key_mode": "exchanged"})
    metrics = exp_sharedkey_overlay(params, np.random.SeedSequence(3))
    by_id = {m.metric_id: m for m in metrics}
    assert by_id["recovered_full_rate"].value >= 0.9


def test_embed_law_oracles_agree_on_random_patterns():
    rng = np.random.default_rng(4)
    probs = [0.5, 0.25, 0.125, 0.125]
    for _ in range(10):
        labels = rng.integers(0, 2, 4).tolist()
        a = _embed_law_oracle(probs, labels, 3)
        b = _embed_law_bruteforce(probs, labels, 3)
        assert tv_distance_exact(a, b) <= 1e-14
        assert tv_distance_exact(a, probs) <= 1e-12


def test_micro_pipeline_law_exact():
    law, mask_gap = _micro_pipeline_law([0.5, 0.5], 4, 0.3)
    assert tv_distance_exact(law, [0.5, 0.5]) <= 1e-12
    assert mask_gap <= 1e-12
