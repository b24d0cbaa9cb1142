"""Experiment registry: one callable per acceptance criterion plus quick
diagnostics, all seeded and deterministic.

Expected values computed here come from independent oracles (label-tuple
enumeration, closed forms, exact recursions), never from the code paths they
check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import attacks, bundle, covert, fixtures, lspn, prke, signaling
from .harness import Metric, child_rngs, parallel_map
from .mockmodel import ResponseLaw, run_conversation
from .primitives import BitVector
from .stats import (frequency_battery, newcombe_diff_interval, tv_distance_exact,
                    wilson_halfwidth, wilson_interval)


@dataclass(frozen=True)
class ExperimentDef:
    fn: object
    defaults: dict
    description: str


def _rng(seed_seq, i=0):
    return np.random.default_rng(seed_seq.spawn(i + 1)[i])


# --- criterion 1: bundle exactness ------------------------------------------------

def _embed_law_oracle(probs, atom_labels, L):
    """Published-atom law for uniform b under a fixed label pattern, by
    enumerating label tuples and positions (independent of the sampler code).

    P(publish = a) = p_a * sum_beta 1/2 * sum_{lambda: lambda_j = l_a}
    P(J = j | lambda, beta) * prod_{i != j} q_{lambda_i}.
    """
    probs = np.asarray(probs, dtype=float)
    q = np.array([probs[np.asarray(atom_labels) == lab].sum() for lab in (0, 1)])
    law = np.zeros(len(probs))
    for lam in itertools.product((0, 1), repeat=L):
        pos0 = [j for j, l in enumerate(lam) if l == 0]
        pos1 = [j for j, l in enumerate(lam) if l == 1]
        m = min(len(pos0), len(pos1))
        star = (pos0[m:] if len(pos0) > len(pos1) else pos1[m:])
        for beta in (0, 1):
            labeled = (pos1 if beta else pos0)[:m]
            for j in range(L):
                if j in star:
                    pj = 1.0 / L
                elif j in labeled:
                    pj = 2.0 / L
                else:
                    continue
                rest = 1.0
                for i in range(L):
                    if i != j:
                        rest *= q[lam[i]]
                for a, lab in enumerate(atom_labels):
                    if lab == lam[j]:
                        law[a] += 0.5 * pj * probs[a] * rest
    return law


def _embed_law_bruteforce(probs, atom_labels, L):
    """Second oracle: direct enumeration of candidate tuples and J choices."""
    atoms = len(probs)
    law = np.zeros(atoms)
    for combo in itertools.product(range(atoms), repeat=L):
        p_tuple = 1.0
        for i in combo:
            p_tuple *= probs[i]
        lam = [atom_labels[i] for i in combo]
        pos0 = [j for j, l in enumerate(lam) if l == 0]
        pos1 = [j for j, l in enumerate(lam) if l == 1]
        m = min(len(pos0), len(pos1))
        star = (pos0[m:] if len(pos0) > len(pos1) else pos1[m:])
        for beta in (0, 1):
            labeled = (pos1 if beta else pos0)[:m]
            for j in star:
                law[combo[j]] += 0.5 * p_tuple / L
            for j in labeled:
                law[combo[j]] += 0.5 * p_tuple * 2.0 / L
    return law


def exp_bundle_exactness(params, seed_seq):
    rng = _rng(seed_seq)
    fixture_laws = {
        "coin-c2": [0.25, 0.25, 0.25, 0.25],
        "coin-c3": [0.125] * 8,
        "pair-dyadic": [0.75, 0.25],
        "pair-nondyadic": [0.3, 0.7],
    }
    max_tv = 0.0
    oracle_gap = 0.0
    for name, probs in fixture_laws.items():
        atoms = len(probs)
        for L in params["bundle_sizes"]:
            for pattern in range(1 << atoms):
                labels = [(pattern >> i) & 1 for i in range(atoms)]
                law = _embed_law_oracle(probs, labels, L)
                max_tv = max(max_tv, tv_distance_exact(law, probs))
                if atoms <= 4 and L <= 2:
                    brute = _embed_law_bruteforce(probs, labels, L)
                    oracle_gap = max(oracle_gap, tv_distance_exact(law, brute))
    # sampler consistency: empirical law of the production embed on one fixture
    model = fixtures.coin_model(2, 5)
    law = ResponseLaw(model, "talk", params["width"])
    pp = bundle.BundlePublicParams.fresh(params["width"], 4, 2.0, rng)
    counts = np.zeros(len(law), dtype=np.int64)
    draws = params["sampler_draws"]
    for _ in range(draws):
        idx = law.draw_indices(rng, 4)
        out = bundle.embed_on_candidates(pp, int(rng.integers(0, 2)),
                                         law.encodings[idx], rng)
        counts[idx[out.published_index]] += 1
    emp_ok = all(
        wilson_interval(int(c), draws)[0] <= p <= wilson_interval(int(c), draws)[1]
        for c, p in zip(counts, law.probs))
    return [
        Metric("exact_published_tv_max", max_tv, max_tv <= params["tol"],
               f"<= {params['tol']}"),
        Metric("oracle_cross_check_gap", oracle_gap, oracle_gap <= 1e-14,
               "<= 1e-14"),
        Metric("sampler_marginal_in_ci", float(emp_ok), emp_ok, "Wilson 95%"),
    ]


# --- criterion 2: bundle BSC property ----------------------------------------------

def exp_bundle_bsc(params, seed_seq):
    rng = _rng(seed_seq)
    metrics = []
    security = params["security"]
    trials = params["trials"]
    for c in (1, 2, 3):
        model = fixtures.coin_model(c, 5)
        law = ResponseLaw(model, "talk", params["width"])
        table = bundle.AtomPatternTable(law.encodings, params["width"])
        L = bundle.bundle_size_for(security, c)
        idx = law.draw_indices(rng, L)
        atom_counts = np.bincount(idx, minlength=len(law))
        exact = bundle.compute_bsc(law.encodings[idx], params["width"]).p
        table_p = table.exact_p(atom_counts)
        ok_b = []
        for b in (0, 1):
            errs = bundle.fixed_bundle_error_trials(atom_counts, table, b,
                                                    trials, rng)
            lo, hi = wilson_interval(int(errs.sum()), trials)
            ok_b.append(lo <= exact <= hi)
        # tail: p <= 2 eps over fresh bundles
        eps = bundle.lhl_epsilon(c)
        n_bundles = params["bundles"]
        good = 0
        for _ in range(n_bundles):
            cnt = np.bincount(law.draw_indices(rng, L), minlength=len(law))
            if table.exact_p(cnt) <= 2 * eps:
                good += 1
        metrics.extend([
            Metric(f"c{c}_exact_vs_table_gap", abs(exact - table_p),
                   abs(exact - table_p) <= 1e-12, "<= 1e-12"),
            Metric(f"c{c}_flip_rate_ci_covers_exact", float(all(ok_b)),
                   all(ok_b), "exact p in Wilson 95% for b=0 and b=1"),
            Metric(f"c{c}_tail_fraction", good / n_bundles,
                   good / n_bundles >= 0.99, ">= 0.99 of bundles have p <= 2eps"),
        ])
    return metrics


# --- criteria 3-4: signaling --------------------------------------------------------

def _majority_chain_law(n, beta, objective, table):
    """Conditional law of the aligned word via the sequential sampler."""
    law = np.zeros(1 << n)
    for word in range(1 << n):
        s = 0
        prob = 1.0
        for t in range(n):
            q = signaling.next_bias_majority(table, n - t, s)
            u = 1 if (word >> t) & 1 else -1
            prob *= q if u == 1 else 1.0 - q
            s += u
        law[word] = prob
    return law


def exp_majority_signaling(params, seed_seq):
    rng = _rng(seed_seq)
    p = params["p"]
    beta = signaling.beta_for_p(p)
    chain_gap = 0.0
    unif_gap = 0.0
    map_ok = True
    for n in range(1, params["exact_n_max"] + 1, 2):
        table = signaling.build_h_table(n, beta)
        law = _majority_chain_law(n, beta, 1, table)
        for word in range(1 << n):
            ssum = 2 * bin(word).count("1") - n
            # closed-form target law: 2^-n * w(S) with w(s) = 2 sigma(beta s)
            target = 2.0 ** (-n) * 2.0 * float(signaling.sigma(beta * ssum))
            chain_gap = max(chain_gap, abs(law[word] - target))
            mirrored = law[(~word) & ((1 << n) - 1)]   # P[y | o=-1] by symmetry
            unif_gap = max(unif_gap,
                           abs(law[word] + mirrored - 2.0 ** (-(n - 1))))
            post = law[word] / (law[word] + mirrored)
            map_ok &= (post >= 0.5) == (ssum > 0)
    # odds ratios over the full triangle at n = 64
    n64 = params["odds_n"]
    table = signaling.build_h_table(n64, beta)
    lo_bound, hi_bound = math.exp(-2 * beta), math.exp(2 * beta)
    odds_ok = True
    worst = 1.0
    for r in range(1, n64 + 1):
        for s in range(-(n64 - r), n64 - r + 1):
            q = signaling.next_bias_majority(table, r, s)
            ratio = q / (1.0 - q)
            odds_ok &= lo_bound - 1e-9 <= ratio <= hi_bound + 1e-9
            worst = max(worst, ratio / hi_bound)
    # error scaling ratio at n in {101, 401}
    trials = params["trials"]
    errs = {}
    for n in (params["ratio_n"], 4 * params["ratio_n"] - 3):
        errs[n] = signaling.majority_error_batch(n, p, trials, rng) / trials
    n1, n4 = params["ratio_n"], 4 * params["ratio_n"] - 3
    ratio = errs[n1] / errs[n4]
    exact_ok = True
    for n in (n1, n4):
        lo, hi = wilson_interval(errs[n] * trials, trials)
        exact_ok &= lo <= signaling.exact_majority_error(
            n, beta) <= hi
    return [
        Metric("chain_vs_closed_form_gap", chain_gap, chain_gap <= 1e-12,
               "<= 1e-12"),
        Metric("uniformity_gap", unif_gap, unif_gap <= 1e-10, "<= 1e-10"),
        Metric("map_equals_majority", float(map_ok), map_ok, "exhaustive n <= 12"),
        Metric("odds_ratio_in_range", worst, odds_ok,
               "within [e^-2beta, e^2beta], n <= 64"),
        Metric("error_ratio_101_401", ratio,
               params["ratio_lo"] <= ratio <= params["ratio_hi"],
               f"in [{params['ratio_lo']}, {params['ratio_hi']}]"),
        Metric("error_ci_covers_exact", float(exact_ok), exact_ok,
               "Wilson 95% covers closed form"),
    ]


def _optimal_chain_laws(n, p):
    """P[y | o = +-1] for all words by replaying the public control rule."""
    laws = {1: np.zeros(1 << n), -1: np.zeros(1 << n)}
    for word in range(1 << n):
        for o in (1, -1):
            w = 0.5
            prob = 1.0
            for t in range(n):
                q_plus, q_minus = signaling.optimal_next_biases(w, p)
                q = q_plus if o == 1 else q_minus
                y = 1 if (word >> t) & 1 else -1
                prob *= q if y == 1 else 1.0 - q
                w = signaling.posterior_update(w, q_plus, y)
            laws[o][word] = prob
    return laws


def exp_optimal_signaling(params, seed_seq):
    rng = _rng(seed_seq)
    p = params["p"]
    # (a) fairness along simulated runs
    runs, n = params["fairness_runs"], params["n"]
    log_odds = np.zeros(runs)
    fairness_gap = 0.0
    o = np.where(rng.random(runs) < 0.5, 1, -1)
    for _ in range(n):
        w = 1.0 / (1.0 + np.exp(-log_odds))
        hi = w >= 0.5
        q_plus = np.where(hi, (0.5 - (1.0 - w) * p) / np.maximum(w, 1e-300), p)
        q_minus = np.where(hi, p, (0.5 - w * p) / np.maximum(1.0 - w, 1e-300))
        fairness_gap = max(fairness_gap, float(
            np.abs(w * q_plus + (1.0 - w) * q_minus - 0.5).max()))
        target = np.where(o == 1, q_plus, q_minus)
        a = (target - p) / (1.0 - 2.0 * p)
        x = np.where(rng.random(runs) < a, 1, -1)
        y = np.where(rng.random(runs) < p, -x, x)
        log_odds += np.where(y == 1, np.log(q_plus / q_minus),
                             np.log((1.0 - q_plus) / (1.0 - q_minus)))
    # (b) exact Bhattacharyya for n <= 12 and exact uniformity
    lam = signaling.bhattacharyya_rate(p)
    bhat_ok = True
    unif_gap = 0.0
    for n_small in range(1, params["exact_n_max"] + 1):
        laws = _optimal_chain_laws(n_small, p)
        bhat = float(np.sqrt(laws[1] * laws[-1]).sum())
        bhat_ok &= bhat <= lam ** n_small + 1e-12
        mix = 0.5 * (laws[1] + laws[-1])
        unif_gap = max(unif_gap, tv_distance_exact(
            mix, np.full(1 << n_small, 2.0 ** (-n_small))))
    # (c) empirical error at n, p
    trials = params["trials"]
    err = signaling.optimal_error_batch(n, p, trials, rng) / trials
    bound = 0.5 * lam ** n
    half = wilson_halfwidth(err * trials, trials)
    return [
        Metric("fairness_gap", fairness_gap, fairness_gap <= 1e-12, "<= 1e-12"),
        Metric("bhattacharyya_within_bound", float(bhat_ok), bhat_ok,
               "A_n <= lambda(p)^n, exact, n <= 12"),
        Metric("uniformity_tv", unif_gap, unif_gap <= 1e-10, "<= 1e-10"),
        Metric("empirical_error", err, err <= bound + half,
               f"<= 0.5*lambda^{n} + CI = {bound:.5f} + {half:.5f}",
               ci=wilson_interval(err * trials, trials)),
    ]


def exp_signaling_uniformity(params, seed_seq):
    p, n = params["p"], params["n"]
    beta = signaling.beta_for_p(p)
    table = signaling.build_h_table(n, beta)
    law_plus = _majority_chain_law(n, beta, 1, table)
    # complement index: y -> -y is bit complement in the +-1 encoding
    comp = np.array([(~w) & ((1 << n) - 1) for w in range(1 << n)])
    maj_mix = 0.5 * (law_plus + law_plus[comp])
    tv_majority = tv_distance_exact(maj_mix, np.full(1 << n, 2.0 ** (-n)))
    laws = _optimal_chain_laws(n, p)
    tv_optimal = tv_distance_exact(0.5 * (laws[1] + laws[-1]),
                                   np.full(1 << n, 2.0 ** (-n)))
    tol = params["tol"]
    return [
        Metric("tv_majority", tv_majority, tv_majority <= tol, f"<= {tol}"),
        Metric("tv_optimal", tv_optimal, tv_optimal <= tol, f"<= {tol}"),
    ]


# --- criterion 5: compiler -----------------------------------------------------------

def exp_compiler(params, seed_seq):
    rng = _rng(seed_seq)
    p, T, eta = params["p"], params["transcript_bits"], params["eta"]
    n_per_bit, total = signaling.compiled_budget(p, T, eta)
    sessions = params["sessions"]
    agreed = signaling.compiled_agreement_batch(T, n_per_bit, p, sessions, rng)
    rate = agreed / sessions
    half = wilson_halfwidth(agreed, sessions)
    # scalar session telemetry: channel uses must equal the helper budget
    backend = prke.IdealBackend(msg_bits=T // 2)
    channel = lambda i: signaling.ChannelSpec.constant(p, n_per_bit, bound=p)
    session = signaling.compile_prke(backend, "optimal", n_per_bit, channel, rng)
    # majority compile example: T=16, n_per_bit = Theta(T^2), union budget 1/100
    pm, Tm = params["majority_p"], params["majority_bits"]
    n_maj = signaling.majority_n_for(pm, 1.0 / (100 * Tm))
    m_sessions = params["majority_sessions"]
    m_agreed = signaling.compiled_agreement_batch(Tm, n_maj, pm, m_sessions, rng,
                                                  scheme="majority")
    m_fail = 1.0 - m_agreed / m_sessions
    m_half = wilson_halfwidth(m_sessions - m_agreed, m_sessions)
    # zero-noise limit: compiled success equals base success exactly
    z_sessions = params["zero_noise_sessions"]
    z_agreed = signaling.compiled_agreement_batch(Tm, 1, 1e-12, z_sessions, rng)
    return [
        Metric("agreement_rate", rate, rate >= 0.99 - half,
               f">= 0.99 - CI (n_per_bit={n_per_bit})",
               ci=wilson_interval(agreed, sessions)),
        Metric("budget_channel_uses", session.channel_uses,
               session.channel_uses == total, f"== {total} (helper budget)"),
        Metric("majority_compile_failure", m_fail, m_fail <= 0.01 + m_half,
               f"<= 0.01 + CI (n_per_bit={n_maj})"),
        Metric("zero_noise_exact", z_agreed / z_sessions,
               z_agreed == z_sessions, "== base success exactly"),
    ]


# --- criterion 6: LSPN ------------------------------------------------------------

def exp_signaling_error(params, seed_seq):
    """Generic signaling run at an explicit per-step crossover schedule."""
    rng = _rng(seed_seq)
    scheme, n, p = params["scheme"], params["n"], params["p"]
    crossovers = params["crossovers"] or [p] * n
    spec = signaling.ChannelSpec(tuple(crossovers), bound=p)
    trials = params["trials"]
    errors = 0
    for _ in range(trials):
        o = 1 if rng.random() < 0.5 else -1
        if scheme == "majority":
            run = signaling.run_majority_signaling(o, n, spec, rng)
        else:
            run = signaling.run_optimal_signaling(o, n, spec, rng)
        errors += run.decoded != o
    rate = errors / trials
    if scheme == "majority":
        bound = signaling.exact_majority_error(n, signaling.beta_for_p(p))
        label = f"exact error {bound:.5f} (any admissible schedule)"
        lo, hi = wilson_interval(errors, trials)
        passed = lo <= bound <= hi
    else:
        bound = 0.5 * signaling.bhattacharyya_rate(p) ** n
        label = f"<= 0.5*lambda^{n} + CI"
        passed = rate <= bound + wilson_halfwidth(errors, trials)
    return [Metric("error_rate", rate, passed, label,
                   ci=wilson_interval(errors, trials))]


def exp_lspn(params, seed_seq):
    run_seq, bias_seq = seed_seq.spawn(2)
    p = lspn.LspnParams(n=params["n"], k=params["k"], eta=params["eta"],
                        ell=params["ell"], security=params["security"],
                        p=params["p"])
    runs = params["runs"]
    agreed = 0
    margin_ok = 0
    kappa0 = 0
    session = None
    for rng in child_rngs(run_seq, runs):
        session = lspn.run_protocol(p, rng)
        agreed += int(session.agreed)
        if session.kappa_a == 0:
            kappa0 += 1
            agreements = p.ell - session.final_distance
            if agreements >= p.ell / 2.0 + 2.0 * math.sqrt(p.security * p.ell):
                margin_ok += 1
    rate = agreed / runs
    margin_rate = margin_ok / max(1, kappa0)
    bias = lspn.xor_bias_trials(p, params["bias_trials"],
                                np.random.default_rng(bias_seq))
    closed = 0.5 - lspn.per_bit_xor_bias(p.k, p.eta, p.p)
    lo, hi = wilson_interval(bias * params["bias_trials"], params["bias_trials"])
    battery = frequency_battery(session.transcript_bits(params["battery_bits"]))
    return [
        Metric("agreement_rate", rate, rate >= 0.99, ">= 0.99 over 10^3 runs",
               ci=wilson_interval(agreed, runs)),
        Metric("xor_bias", bias, lo <= closed <= hi,
               f"Wilson 95% covers piling-up value {closed:.6f}", ci=(lo, hi)),
        Metric("hoeffding_margin_rate", margin_rate, margin_rate >= 0.99,
               ">= 0.99 of kappa_A=0 runs"),
        Metric("transcript_battery", float(battery["pass"]), battery["pass"],
               "monobit/serial/runs at 1e5 bits"),
    ]


# --- criterion 7: public-code dichotomy ----------------------------------------------

def exp_prc_dichotomy(params, seed_seq):
    rng = _rng(seed_seq)
    p, trials = params["p"], params["trials"]
    metrics = []
    for scheme in attacks.shipped_schemes():
        rep = attacks.prc_bound_check(scheme, p, trials, rng)
        metrics.append(Metric(
            f"{scheme.name}_dichotomy",
            rep["eps_hat"] if rep["dichotomy"] else -1.0, rep["dichotomy"],
            f"not (eps < p/4 - 0.02 and adv < 0.05); adv={rep['advantage']:.4f}"))
    return metrics


# --- criterion 8: Fourier attack -----------------------------------------------------

def exp_fourier_attack(params, seed_seq):
    delta, d, ell = params["delta"], params["d"], params["ell"]
    n_pairs = attacks.bidegree_count(ell, ell, d)
    m = int(math.ceil(params["constant"] * n_pairs / delta ** 4))
    reps = params["reps"]
    planted = attacks.planted_parity_sampler(ell, delta, 1 << 3, 1 << 7)
    null = attacks.null_sampler(ell, ell)
    planted_seq, null_seq, lspn_seq = seed_seq.spawn(3)
    correct_p = correct_n = 0
    for rng in child_rngs(planted_seq, reps):
        rep = attacks.run_attack(planted, d, delta, m, rng)
        correct_p += int(rep.verdict == "protocol")
    for rng in child_rngs(null_seq, reps):
        rep = attacks.run_attack(null, d, delta, m, rng)
        correct_n += int(rep.verdict == "null")
    # single-iteration LSPN sampler vs matched null
    rng = np.random.default_rng(lspn_seq)
    n_l, k_l = params["lspn_n"], params["lspn_k"]
    m_l = params["lspn_m"]
    sampler = attacks.lspn_iteration_sampler(n_l, k_l, params["lspn_eta"],
                                             params["lspn_p"])
    proto_score = attacks.low_degree_score(sampler(rng, m_l), sampler(rng, m_l),
                                           d).score
    null_l = attacks.null_sampler(n_l, n_l)
    null_scores = [attacks.low_degree_score(null_l(rng, m_l), null_l(rng, m_l),
                                            d).score
                   for _ in range(params["lspn_null_reps"])]
    mu, sd = float(np.mean(null_scores)), float(np.std(null_scores, ddof=1))
    return [
        Metric("planted_correct", correct_p / reps, correct_p >= (2 * reps) // 3,
               f">= 2/3 of {reps} (m={m})"),
        Metric("null_correct", correct_n / reps, correct_n >= (2 * reps) // 3,
               f">= 2/3 of {reps}"),
        Metric("lspn_score_sigmas", (proto_score - mu) / sd,
               proto_score >= mu + 3 * sd, ">= 3 sigma above matched null"),
    ]


# --- criterion 9: keyless pipeline ----------------------------------------------------

def _micro_pipeline_law(atom_probs, L, p_design):
    """Exact published-atom law (jointly with the mask bit) of one pipeline
    round on a 2-atom fixture, enumerating candidates, label patterns, the
    uniform carrier bit, the sender draw, and the branch choice.

    Returns (law over atoms, max deviation of P[atom | mask] from the law),
    the latter checking exactness even conditioned on the public mask.
    """
    atom_probs = np.asarray(atom_probs, dtype=float)
    law = np.zeros(2)
    law_by_r = np.zeros((2, 2))
    patterns = [(0, 0), (0, 1), (1, 0), (1, 1)]      # equally likely seeds
    for combo in itertools.product((0, 1), repeat=L):
        p_tuple = float(np.prod(atom_probs[list(combo)]))
        for pattern in patterns:
            w_pat = 0.25
            labels = [pattern[i] for i in combo]
            n1 = sum(labels)
            n0 = L - n1
            nstar = abs(n0 - n1)
            # exact crossover of this bundle (average over patterns)
            p_t = 0.0
            for pat2 in patterns:
                l2 = [pat2[i] for i in combo]
                p_t += 0.25 * abs(L - 2 * sum(l2)) / (2.0 * L)
            q_plus, q_minus = signaling.optimal_next_biases(0.5, p_design)
            for b in (0, 1):                          # uniform carrier bit
                target = q_plus if b else q_minus
                a = signaling.realize_bias_clamped(target, p_t)
                for x_bit, p_x in ((1, a), (0, 1.0 - a)):
                    for r in (0, 1):
                        beta = x_bit ^ r
                        weight = 0.5 * w_pat * p_tuple * p_x * 0.5
                        if weight == 0.0:
                            continue
                        m = min(n0, n1)
                        # star branch: uniform over leftover (majority) slots
                        if nstar:
                            maj = 1 if n1 > n0 else 0
                            pos = [j for j, l in enumerate(labels) if l == maj]
                            for j in pos[m:]:
                                law[combo[j]] += weight * (1.0 / L)
                                law_by_r[r][combo[j]] += weight * (1.0 / L)
                        if m:
                            pos_b = [j for j, l in enumerate(labels)
                                     if l == beta][:m]
                            for j in pos_b:
                                law[combo[j]] += weight * (2.0 / L)
                                law_by_r[r][combo[j]] += weight * (2.0 / L)
    cond = law_by_r / law_by_r.sum(axis=1, keepdims=True)
    mask_gap = float(np.abs(cond - atom_probs[None, :]).max())
    return law, mask_gap


def _pipeline_run(args):
    (seed, msg_bits, p_design, n_per_bit, c, width, content, L) = args
    run_rng = np.random.default_rng(np.random.SeedSequence(seed))
    pp_rng = np.random.default_rng(np.random.SeedSequence((seed, 77)))
    model = fixtures.coin_model(c, content)
    fixture = covert.CovertFixture(model, model, "talk", content - 1, width)
    carrier = covert.CompiledKe(prke.IdealBackend(msg_bits=msg_bits),
                                p_design, n_per_bit)
    pps = covert.pp_stream(width, L, float(c), pp_rng)
    result = covert.run_covert_ke(fixture, carrier, pps, run_rng)
    return int(result.agreed), result.telemetry["clamped_steps"]


def exp_keyless_pipeline(params, seed_seq):
    # exact micro law: two carried bits over 2-atom rounds
    law, mask_gap = _micro_pipeline_law([0.5, 0.5], params["micro_L"],
                                        params["micro_p_design"])
    micro_tv = tv_distance_exact(law, [0.5, 0.5])
    # Monte Carlo at c=2
    T = 2 * params["msg_bits"]
    n_per_bit = signaling.n_per_bit_for(params["p_design"], T, params["eta"])
    runs = params["runs"]
    seeds = [int(s.generate_state(1)[0]) for s in seed_seq.spawn(runs)]
    args = [(s, params["msg_bits"], params["p_design"], n_per_bit,
             2, params["width"], params["content_len"], params["bundle_L"])
            for s in seeds]
    outcomes = parallel_map(_pipeline_run, args)
    agreed = sum(o[0] for o in outcomes)
    clamped = sum(o[1] for o in outcomes)
    rate = agreed / runs
    return [
        Metric("micro_transcript_tv", micro_tv, micro_tv <= params["micro_tol"],
               f"<= {params['micro_tol']} (exact enumeration)"),
        Metric("micro_mask_conditional_gap", mask_gap, mask_gap <= 1e-12,
               "<= 1e-12 (exact even given the mask bit)"),
        Metric("agreement_rate", rate, rate >= 0.97,
               f">= 0.97 (n_per_bit={n_per_bit}, clamped={clamped})",
               ci=wilson_interval(agreed, runs)),
    ]


# --- criterion 10: shared-key overlay ---------------------------------------------------

def _exchanged_key(rng) -> covert.SessionKey:
    """Derive an interaction-unique key from a small compiled pipeline run."""
    model = fixtures.coin_model(6, 6)
    fixture = covert.CovertFixture(model, model, "talk", 5, 12)
    carrier = covert.CompiledKe(prke.IdealBackend(msg_bits=8), 0.04, 41)
    pps = covert.pp_stream(12, 1024, 6.0, np.random.default_rng(rng.spawn(1)[0]))
    res = covert.run_covert_ke(fixture, carrier, pps, rng)
    key_bytes = np.packbits(res.key_a.bits).tobytes()
    return covert.SessionKey(key_bytes, origin="exchanged")


def exp_sharedkey_overlay(params, seed_seq):
    n_tokens, rounds = params["tokens_per_round"], params["rounds"]
    payload_bits = (n_tokens * rounds) // params["repetition"]
    model = fixtures.flat_model(n_tokens)
    policy = fixtures.constant_policy("essay")
    runs = params["runs"]
    ok64 = ok_full = 0
    rngs = child_rngs(seed_seq.spawn(1)[0], runs)
    for i, rng in enumerate(rngs):
        payload = covert.CovertPayload(BitVector(
            rng.integers(0, 2, payload_bits, dtype=np.uint8)))
        if params["key_mode"] == "exchanged":
            key = _exchanged_key(rng)
        else:
            key = covert.SessionKey(rng.bytes(16))
        result = covert.covert_conversation(
            model, model, policy, policy, rounds, payload, key, rng,
            repetition=params["repetition"])
        got = result.decoded_bits
        want = [int(b) for b in payload.bits]
        ok64 += int(len(got) >= 64 and got[:64] == want[:64])
        ok_full += int(got == want)
    # zero payload: byte-identical to the honest run under the same seed
    identical = True
    for rng_seed in range(params["identity_checks"]):
        seed = np.random.SeedSequence((123, rng_seed))
        honest = run_conversation(policy, policy, model, model, 4,
                                  np.random.default_rng(seed))
        overlay = covert.covert_conversation(
            model, model, policy, policy, 4,
            covert.CovertPayload(BitVector([])),
            covert.SessionKey(b"\x00" * 16), np.random.default_rng(seed))
        identical &= ([r.message for r in honest.rounds]
                      == [r.message for r in overlay.transcript.rounds])
    return [
        Metric("recovered_64_rate", ok64 / runs, ok64 / runs >= 0.99,
               ">= 0.99 of runs recover >= 64 bits error-free",
               ci=wilson_interval(ok64, runs)),
        Metric("recovered_full_rate", ok_full / runs, ok_full / runs >= 0.99,
               f"all {payload_bits} payload bits"),
        Metric("zero_payload_identical", float(identical), identical,
               "byte-identical to honest run, same seed"),
    ]


# --- criterion 11: undetectability battery ----------------------------------------------

def _battery_statistics_bundle(transcripts):
    """Five indicator statistics on 4-round atom-index transcripts."""
    t = transcripts
    return [
        t[:, 0] == 0,
        t[:, 0] == t[:, 1],
        (t.sum(axis=1) & 1) == 1,
        (t[:, 0] == t[:, 1]) & (t[:, 1] == t[:, 2]) & (t[:, 2] == t[:, 3]),
        (t[:, 3] & 1) == 1,
    ]


def _sample_bundle_overlay(law, table, L, p_design, rounds, samples, rng):
    out = np.empty((samples, rounds), dtype=np.int64)
    q_plus, q_minus = signaling.optimal_next_biases(0.5, p_design)
    for r_i in range(rounds):
        idx = law.draw_indices(rng, samples * L).reshape(samples, L)
        labels_by_pattern = table.patterns
        pat = table.sample_pattern_ids(rng, samples)
        labels = labels_by_pattern[pat[:, None], idx]
        n1 = labels.sum(axis=1).astype(np.int64)
        n0 = L - n1
        nstar = np.abs(n0 - n1)
        # exact crossover per bundle via the pattern table
        counts2 = np.stack([np.bincount(row, minlength=len(law)) for row in idx])
        diff = np.abs(counts2.astype(np.int64) @ table.signs.T)
        p_t = (diff * table.weights[None, :]).sum(axis=1) / (2.0 * L)
        bits = rng.integers(0, 2, samples)
        target = np.where(bits == 1, q_plus, q_minus)
        a = np.clip((target - p_t) / (1.0 - 2.0 * p_t), 0.0, 1.0)
        x = (rng.random(samples) < a).astype(np.uint8)
        r_mask = rng.integers(0, 2, samples, dtype=np.uint8)
        beta = x ^ r_mask
        star = rng.random(samples) < nstar / L
        m = np.minimum(n0, n1)
        pick = rng.random(samples)
        for s in range(samples):
            lab = labels[s]
            if star[s]:
                maj = 1 if n1[s] > n0[s] else 0
                pos = np.flatnonzero(lab == maj)[m[s]:]
            else:
                pos = np.flatnonzero(lab == beta[s])[:m[s]]
            out[s, r_i] = idx[s, pos[int(pick[s] * pos.size)]]
    return out


def exp_undetectability(params, seed_seq):
    rng = _rng(seed_seq)
    samples = params["samples"]
    metrics = []
    # bundle path: 4-round overlay transcripts vs honest, c=2 fixture
    model = fixtures.coin_model(2, 5)
    law = ResponseLaw(model, "talk", params["width"])
    table = bundle.AtomPatternTable(law.encodings, params["width"])
    overlay = _sample_bundle_overlay(law, table, params["bundle_L"],
                                     params["p_design"], 4, samples, rng)
    honest = law.draw_indices(rng, samples * 4).reshape(samples, 4)
    for i, (sa, sb) in enumerate(zip(_battery_statistics_bundle(overlay),
                                     _battery_statistics_bundle(honest))):
        adv = abs(sa.mean() - sb.mean())
        lo, hi = newcombe_diff_interval(int(sa.sum()), samples,
                                        int(sb.sum()), samples)
        width = hi - lo
        metrics.append(Metric(f"bundle_stat{i + 1}_advantage", adv,
                              adv <= width, "<= CI width", ci=(lo, hi)))
    # rejection path: single high-entropy messages, first-accept embedding
    n_bits = params["flat_bits"]
    weights = np.array([1, 2], dtype=np.uint64)
    tries = params["rejection_tries"]
    cand = rng.integers(0, 1 << n_bits, size=(samples, tries), dtype=np.uint64)
    a_seeds = rng.integers(0, 1 << n_bits, size=samples, dtype=np.uint64)
    offs = rng.integers(0, 2, size=samples, dtype=np.uint64)
    b = rng.integers(0, 2, size=samples, dtype=np.uint64)
    lab = (np.bitwise_count(cand & a_seeds[:, None]) & np.uint64(1)) ^ offs[:, None]
    match = lab == b[:, None]
    first = np.argmax(match, axis=1)
    any_match = match.any(axis=1)
    chosen = cand[np.arange(samples), first]
    fallback = rng.integers(0, 1 << n_bits, size=samples, dtype=np.uint64)
    rejected = np.where(any_match, chosen, fallback)
    honest_flat = rng.integers(0, 1 << n_bits, size=samples, dtype=np.uint64)

    def flat_stats(v):
        return [
            (np.bitwise_count(v) & np.uint64(1)) == 1,
            (v & np.uint64(1)) == 1,
            np.bitwise_count(v) > n_bits // 2,
            ((v >> np.uint64(1)) & np.uint64(1)) == (v & np.uint64(1)),
            (v % np.uint64(5)) == 0,
        ]

    for i, (sa, sb) in enumerate(zip(flat_stats(rejected),
                                     flat_stats(honest_flat))):
        adv = abs(sa.mean() - sb.mean())
        lo, hi = newcombe_diff_interval(int(sa.sum()), samples,
                                        int(sb.sum()), samples)
        metrics.append(Metric(f"rejection_stat{i + 1}_advantage", adv,
                              adv <= hi - lo, "<= CI width", ci=(lo, hi)))
    return metrics


# --- criterion 12: determinism -----------------------------------------------------------

def exp_determinism(params, seed_seq):
    from .harness import ExperimentConfig, run_experiment

    seed = int(seed_seq.generate_state(1)[0]) % (2 ** 31)
    cfg = ExperimentConfig("signaling-uniformity", {}, seed)
    b1 = run_experiment(cfg).to_bytes()
    b2 = run_experiment(cfg).to_bytes()
    same = b1 == b2
    return [Metric("replay_byte_identical", float(same), same,
                   "same config + seed => same bytes")]


EXPERIMENTS = {
    "bundle-exactness": ExperimentDef(
        exp_bundle_exactness,
        {"bundle_sizes": [2, 4], "tol": 1e-12, "width": 12,
         "sampler_draws": 20000},
        "exact published law equals the carrier law on enumerable fixtures"),
    "bundle-bsc": ExperimentDef(
        exp_bundle_bsc,
        {"security": 16, "width": 12, "trials": 100_000, "bundles": 1000},
        "ComputeBSC equals empirical flip rate; p <= 2eps tail"),
    "majority-signaling": ExperimentDef(
        exp_majority_signaling,
        {"p": 0.2, "exact_n_max": 11, "odds_n": 64, "ratio_n": 101,
         "trials": 100_000, "ratio_lo": 1.6, "ratio_hi": 2.4},
        "uniformity, odds ratios, 1/sqrt(n) error scaling"),
    "optimal-signaling": ExperimentDef(
        exp_optimal_signaling,
        {"p": 0.1, "n": 40, "fairness_runs": 10_000, "exact_n_max": 12,
         "trials": 100_000},
        "fairness, Bhattacharyya contraction, exponential error"),
    "signaling-uniformity": ExperimentDef(
        exp_signaling_uniformity, {"p": 0.2, "n": 10, "tol": 1e-10},
        "exact uniformity of both schemes at small n"),
    "signaling-error": ExperimentDef(
        exp_signaling_error,
        {"scheme": "optimal", "n": 25, "p": 0.15, "crossovers": None,
         "trials": 2000},
        "signaling error under an explicit crossover schedule"),
    "compiler": ExperimentDef(
        exp_compiler,
        {"p": 0.1, "transcript_bits": 64, "eta": 0.01, "sessions": 1000,
         "majority_p": 0.0005, "majority_bits": 16, "majority_sessions": 150,
         "zero_noise_sessions": 200},
        "PR-KE compiled through signaling blocks"),
    "lspn-correctness": ExperimentDef(
        exp_lspn,
        {"n": 256, "k": 3, "eta": 0.0625, "p": 0.0625, "ell": 9216,
         "security": 8, "runs": 1000, "bias_trials": 1_000_000,
         "battery_bits": 100_000},
        "sparse-parity protocol at desk parameters"),
    "prc-dichotomy": ExperimentDef(
        exp_prc_dichotomy, {"p": 0.1, "trials": 200_000},
        "public-code error/distinguish dichotomy on shipped schemes"),
    "fourier-attack": ExperimentDef(
        exp_fourier_attack,
        {"delta": 0.3, "d": 2, "ell": 16, "constant": 16, "reps": 30,
         "lspn_n": 12, "lspn_k": 1, "lspn_eta": 0.1, "lspn_p": 0.1,
         "lspn_m": 1_000_000, "lspn_null_reps": 20},
        "two-block low-bi-degree Score attack"),
    "keyless-pipeline": ExperimentDef(
        exp_keyless_pipeline,
        {"msg_bits": 32, "p_design": 0.19, "eta": 0.01, "runs": 1000,
         "width": 12, "content_len": 5, "bundle_L": 128,
         "micro_L": 4, "micro_p_design": 0.3, "micro_tol": 1e-10},
        "covert KE through bundle channel uses on the c=2 fixture"),
    "sharedkey-overlay": ExperimentDef(
        exp_sharedkey_overlay,
        {"tokens_per_round": 16, "rounds": 32, "repetition": 5, "runs": 1000,
         "identity_checks": 25, "key_mode": "given"},
        "keyed stego overlay: rate and zero-payload identity"),
    "undetectability-battery": ExperimentDef(
        exp_undetectability,
        {"samples": 100_000, "width": 12, "bundle_L": 16, "p_design": 0.3,
         "flat_bits": 16, "rejection_tries": 16},
        "honest vs overlay samplers against five canned statistics"),
    "determinism": ExperimentDef(
        exp_determinism, {},
        "byte-identical reports under replay"),
}


# acceptance gate: (criterion number, experiment id, runtime budget seconds)
ACCEPTANCE = [
    (1, "bundle-exactness", 60),
    (2, "bundle-bsc", 300),
    (3, "majority-signaling", 600),
    (4, "optimal-signaling", 600),
    (5, "compiler", 600),
    (6, "lspn-correctness", 900),
    (7, "prc-dichotomy", 300),
    (8, "fourier-attack", 1200),
    (9, "keyless-pipeline", 1200),
    (10, "sharedkey-overlay", 600),
    (11, "undetectability-battery", 900),
    (12, "determinism", 300),
]
