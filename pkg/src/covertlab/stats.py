"""Statistical testing utilities shared by the experiment harness and tests.

Conventions: Wilson intervals at 95% for all binomial confidence statements,
total-variation distance as (1/2) sum |p - q| over a common support, and
frequency batteries reported as z / chi-square statistics rather than booleans
so callers pick their own thresholds.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import chi2 as _chi2

Z95 = 1.959963984540054


def wilson_interval(successes: float, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Accepts fractional success counts so that averages of bounded [0,1]
    variables can reuse the same (conservative) interval.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes outside [0, trials]")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


def wilson_halfwidth(successes: float, trials: int, z: float = Z95) -> float:
    lo, hi = wilson_interval(successes, trials, z)
    return (hi - lo) / 2.0


def newcombe_diff_interval(s1: float, n1: int, s2: float, n2: int,
                           z: float = Z95) -> tuple[float, float]:
    """Newcombe score interval for a difference of two independent proportions."""
    p1, p2 = s1 / n1, s2 / n2
    l1, u1 = wilson_interval(s1, n1, z)
    l2, u2 = wilson_interval(s2, n2, z)
    d = p1 - p2
    lo = d - math.sqrt((p1 - l1) ** 2 + (u2 - p2) ** 2)
    hi = d + math.sqrt((u1 - p1) ** 2 + (p2 - l2) ** 2)
    return lo, hi


def tv_distance_exact(law1, law2) -> float:
    """Total variation distance between two explicit distributions.

    Both laws must be indexed over the same finite support (equal-length
    arrays); a length mismatch is rejected.
    """
    p = np.asarray(law1, dtype=float)
    q = np.asarray(law2, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def tv_distance_tables(law1: dict, law2: dict) -> float:
    """TV distance for dict-form laws; the support is the key union."""
    keys = set(law1) | set(law2)
    return 0.5 * sum(abs(law1.get(k, 0.0) - law2.get(k, 0.0)) for k in keys)


def chi_square_uniform(counts) -> tuple[float, float]:
    """Chi-square statistic and p-value against the uniform law over the cells."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    expected = n / counts.size
    stat = float(((counts - expected) ** 2 / expected).sum())
    pvalue = float(_chi2.sf(stat, counts.size - 1))
    return stat, pvalue


# --- frequency battery -------------------------------------------------------
#
# Smoke filters for "this bit stream is not obviously structured"; they are
# used as sanity checks on pseudorandom transcripts, never as security proofs.

def monobit_z(bits) -> float:
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    return float((2 * bits.sum() - n) / math.sqrt(n))


def serial_chi2(bits) -> tuple[float, float]:
    """Chi-square on the four overlapping-pair frequencies (lag-1 serial test)."""
    bits = np.asarray(bits, dtype=np.int64)
    pairs = bits[:-1] * 2 + bits[1:]
    counts = np.bincount(pairs, minlength=4).astype(float)
    n = counts.sum()
    stat = float(((counts - n / 4) ** 2 / (n / 4)).sum())
    return stat, float(_chi2.sf(stat, 3))


def runs_z(bits) -> float:
    """Wald-Wolfowitz runs test statistic."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    ones = int(bits.sum())
    zeros = n - ones
    if ones == 0 or zeros == 0:
        return float("inf")
    runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    mu = 1 + 2.0 * ones * zeros / n
    var = (mu - 1) * (mu - 2) / (n - 1)
    return float((runs - mu) / math.sqrt(var))


def frequency_battery(bits, z_max: float = 4.0) -> dict:
    """Run monobit/serial/runs on a bit array; returns statistics and verdict.

    z_max = 4.0 keeps the false-alarm rate of the battery near 1e-4 per
    statistic, low enough for seeded deterministic suites.
    """
    stat, pval = serial_chi2(bits)
    results = {
        "monobit_z": monobit_z(bits),
        "serial_chi2": stat,
        "serial_pvalue": pval,
        "runs_z": runs_z(bits),
    }
    # chi2(3) beyond ~21 is roughly the same 1e-4 tail as |z| = 3.9
    results["pass"] = (
        abs(results["monobit_z"]) <= z_max
        and abs(results["runs_z"]) <= z_max
        and results["serial_chi2"] <= 21.1
    )
    return results
