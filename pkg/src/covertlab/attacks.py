"""Constructive distinguishers: the public-code impossibility tests and the
two-block low-bi-degree Fourier score attack on non-interactive correlated
bits.

The Score statistic sums, over all character pairs (S, T) with |S|,|T| <= d,
the product of the two blocks' empirical key/character correlations; the
protocol verdict triggers at delta^2/4. Coefficient sums are exact integers
(accumulated in int32/float64), so results are engine-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .stats import wilson_interval

INDEX_CAP = 1_000_000


@dataclass(frozen=True)
class SampleBatch:
    """I.i.d. samples (x, y, key) from a protocol or null source; key in {+-1}."""
    x: np.ndarray                 # uint64 values below 2^ell_a
    y: np.ndarray
    keys: np.ndarray              # int8 +-1
    ell_a: int
    ell_b: int
    source: str = "protocol"

    def __post_init__(self):
        if not (self.x.shape == self.y.shape == self.keys.shape):
            raise ValueError("batch arrays must share a shape")


def masks_up_to(ell: int, d: int) -> np.ndarray:
    """Character masks with |S| <= d: empty set, then by degree, lex within."""
    out = [0]
    import itertools
    for deg in range(1, d + 1):
        for combo in itertools.combinations(range(ell), deg):
            out.append(sum(1 << b for b in combo))
    return np.array(out, dtype=np.uint64)


def bidegree_count(ell_a: int, ell_b: int, d: int) -> int:
    """|L_d| = (sum_{i<=d} C(ell_a, i)) * (sum_{j<=d} C(ell_b, j))."""
    fa = sum(math.comb(ell_a, i) for i in range(d + 1))
    fb = sum(math.comb(ell_b, j) for j in range(d + 1))
    return fa * fb


def _phi_table(ell: int, masks: np.ndarray) -> np.ndarray:
    """(2^ell, n_masks) table of character values +-1 as int8."""
    vals = np.arange(1 << ell, dtype=np.uint64)
    out = np.empty((1 << ell, masks.size), dtype=np.int8)
    chunk = 1 << 13
    for start in range(0, 1 << ell, chunk):
        v = vals[start:start + chunk]
        par = (np.bitwise_count(v[:, None] & masks[None, :]) & np.uint64(1))
        out[start:start + chunk] = 1 - 2 * par.astype(np.int8)
    return out


@nb.njit(cache=True)
def _accumulate_w(x, y, keys, phi, w):
    """w[x_i] += keys_i * phi[y_i], exact in int32."""
    m = x.shape[0]
    nf = phi.shape[1]
    for i in range(m):
        row = w[x[i]]
        ph = phi[y[i]]
        if keys[i] > 0:
            for t in range(nf):
                row[t] += ph[t]
        else:
            for t in range(nf):
                row[t] -= ph[t]


def _coefficient_sums(batch: SampleBatch, masks_a: np.ndarray,
                      masks_b: np.ndarray, engine: str) -> np.ndarray:
    """Matrix of integer sums N[S,T] = sum_i key_i chi_S(x_i) chi_T(y_i)."""
    if engine == "hist":
        phi_b = _phi_table(batch.ell_b, masks_b)
        w = np.zeros((1 << batch.ell_a, masks_b.size), dtype=np.int32)
        _accumulate_w(batch.x, batch.y, batch.keys, phi_b, w)
        phi_a = _phi_table(batch.ell_a, masks_a).astype(np.float64)
        return phi_a.T @ w.astype(np.float64)
    if engine == "gemm":
        out = np.zeros((masks_a.size, masks_b.size), dtype=np.float64)
        chunk = 1 << 20
        for start in range(0, batch.x.size, chunk):
            xs = batch.x[start:start + chunk]
            ys = batch.y[start:start + chunk]
            ks = batch.keys[start:start + chunk].astype(np.float32)
            ua = (1 - 2 * (np.bitwise_count(xs[:, None] & masks_a[None, :])
                           & np.uint64(1)).astype(np.float32))
            ub = (1 - 2 * (np.bitwise_count(ys[:, None] & masks_b[None, :])
                           & np.uint64(1)).astype(np.float32))
            out += (ua * ks[:, None]).T.astype(np.float64) @ ub.astype(np.float64)
        return out
    raise ValueError(f"unknown engine {engine!r}")


@dataclass
class ScoreResult:
    score: float
    m: int
    n_pairs: int
    coeffs1: np.ndarray
    coeffs2: np.ndarray

    def top_coefficients(self, k: int = 5) -> list:
        prod = self.coeffs1 * self.coeffs2
        flat = np.argsort(prod.ravel())[::-1][:k]
        rows, cols = np.unravel_index(flat, prod.shape)
        return [(int(r), int(c), float(prod[r, c])) for r, c in zip(rows, cols)]


def low_degree_score(batch1: SampleBatch, batch2: SampleBatch, d: int,
                     cap: int = INDEX_CAP, engine: str = "auto") -> ScoreResult:
    """Two-block product estimator of the low-bi-degree Fourier energy.

    Enumerates all (S, T) with |S| <= d, |T| <= d (rejected above ``cap``),
    estimates each coefficient on each block, and returns the inner product
    of the two estimates. Null sources score 0 in expectation; a protocol
    with correctness bias delta scores at least delta^2/2.
    """
    if (batch1.ell_a, batch1.ell_b) != (batch2.ell_a, batch2.ell_b):
        raise ValueError("blocks must share message lengths")
    n_pairs = bidegree_count(batch1.ell_a, batch1.ell_b, d)
    if n_pairs > cap:
        raise ValueError(f"|L_d| = {n_pairs} exceeds cap {cap}")
    if engine == "auto":
        engine = ("hist" if d == 2 and batch1.ell_a <= 16
                  and batch1.x.size >= 1 << 20 else "gemm")
    masks_a = masks_up_to(batch1.ell_a, d)
    masks_b = masks_up_to(batch1.ell_b, d)
    sums1 = _coefficient_sums(batch1, masks_a, masks_b, engine)
    sums2 = _coefficient_sums(batch2, masks_a, masks_b, engine)
    c1 = sums1 / batch1.x.size
    c2 = sums2 / batch2.x.size
    return ScoreResult(float((c1 * c2).sum()), batch1.x.size, n_pairs, c1, c2)


def proof_degree(rho: float, delta: float) -> int:
    """The proof's degree choice: min { t >= 0 : rho^(t+1) <= delta^2/4 }."""
    t = 0
    while rho ** (t + 1) > delta * delta / 4.0:
        t += 1
    return t


@dataclass
class AttackReport:
    verdict: str
    score: float
    threshold: float
    m: int
    m_recommended: int
    warning: str | None
    top: list


def run_attack(sampler, d: int, delta: float, m: int,
               rng: np.random.Generator, cap: int = INDEX_CAP,
               constant: int = 16) -> AttackReport:
    """Draw two independent blocks of m samples and threshold the Score at
    delta^2/4. Under-sampling (m below constant * |L_d| / delta^4) is allowed
    but flagged with the achievable-confidence caveat."""
    b1 = sampler(rng, m)
    b2 = sampler(rng, m)
    result = low_degree_score(b1, b2, d, cap=cap)
    m_rec = int(math.ceil(constant * result.n_pairs / delta ** 4))
    warning = None
    if m < m_rec:
        warning = (f"under-sampled: m={m} < {m_rec}; null-score sd is about "
                   f"{result.n_pairs / m:.2e} against threshold {delta ** 2 / 4:.2e}")
    verdict = "protocol" if result.score >= delta * delta / 4.0 else "null"
    return AttackReport(verdict, result.score, delta * delta / 4.0, m, m_rec,
                        warning, result.top_coefficients())


# --- sample sources -------------------------------------------------------------

def _word_dtype(ell: int):
    return np.uint16 if ell <= 16 else np.uint64


def planted_parity_sampler(ell: int, delta: float, s_mask: int, t_mask: int):
    """Uniform (x, y); key = chi_S(x) chi_T(y) flipped with prob (1-delta)/2,
    so E[key | x, y] = delta * chi_S chi_T exactly."""
    dtype = _word_dtype(ell)

    def sample(rng: np.random.Generator, m: int) -> SampleBatch:
        x = rng.integers(0, 1 << ell, size=m, dtype=dtype)
        y = rng.integers(0, 1 << ell, size=m, dtype=dtype)
        key = np.empty(m, dtype=np.int8)
        chunk = 1 << 22
        for start in range(0, m, chunk):
            par = ((np.bitwise_count(x[start:start + chunk] & dtype(s_mask))
                    + np.bitwise_count(y[start:start + chunk] & dtype(t_mask)))
                   & 1)
            key[start:start + chunk] = 1 - 2 * par.astype(np.int8)
        flip = rng.random(m) < (1.0 - delta) / 2.0
        key[flip] *= -1
        return SampleBatch(x, y, key, ell, ell, "protocol")

    return sample


def null_sampler(ell_a: int, ell_b: int):
    def sample(rng: np.random.Generator, m: int) -> SampleBatch:
        x = rng.integers(0, 1 << ell_a, size=m, dtype=_word_dtype(ell_a))
        y = rng.integers(0, 1 << ell_b, size=m, dtype=_word_dtype(ell_b))
        key = (1 - 2 * rng.integers(0, 2, size=m, dtype=np.int8))
        return SampleBatch(x, y, key, ell_a, ell_b, "null")

    return sample


def lspn_iteration_sampler(n: int, k: int, eta: float, p: float,
                           c_seed: int = 7):
    """One sparse-parity iteration as a non-interactive protocol sample:
    x = C s + e (sent), y = r^T C + f (sent), key = Alice's derived bit
    (b + channel noise) . s in +-1. The public matrix is fixed per sampler."""
    c_bits = np.random.default_rng(c_seed).integers(0, 2, size=(n, n),
                                                    dtype=np.uint8)

    def sample(rng: np.random.Generator, m: int) -> SampleBatch:
        s_idx = np.argpartition(rng.random((m, n)), k - 1, axis=1)[:, :k]
        r_idx = np.argpartition(rng.random((m, n)), k - 1, axis=1)[:, :k]
        e = (rng.random((m, n)) < eta).astype(np.uint8)
        f = (rng.random((m, n)) < eta).astype(np.uint8)
        a = (c_bits.T[s_idx].sum(axis=1) + e) % 2        # C s + e
        b = (c_bits[r_idx].sum(axis=1) + f) % 2          # r^T C + f
        noise_b = (rng.random((m, n)) < p).astype(np.uint8)
        b_recv = b ^ noise_b
        rows = np.arange(m)[:, None]
        k_a = (b_recv[rows, s_idx].sum(axis=1) & 1).astype(np.int8)
        weights = (1 << np.arange(n, dtype=np.uint64))
        x = (a.astype(np.uint64) * weights).sum(axis=1)
        y = (b.astype(np.uint64) * weights).sum(axis=1)
        return SampleBatch(x, y, 1 - 2 * k_a, n, n, "protocol")

    return sample


# --- public-code tests ------------------------------------------------------------

def majority_decoder(n: int):
    def f(batch: np.ndarray) -> np.ndarray:
        return np.where(batch.sum(axis=1) * 2 > n, 1, -1).astype(np.int8)
    return f


def constant_decoder(value: int):
    def f(batch: np.ndarray) -> np.ndarray:
        return np.full(batch.shape[0], value, dtype=np.int8)
    return f


def identity_decoder():
    def f(batch: np.ndarray) -> np.ndarray:
        return (2 * batch[:, 0].astype(np.int8) - 1)
    return f


def _noisy(batch: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    return batch ^ (rng.random(batch.shape) < p).astype(np.uint8)


def prc_test1(decoder, source_sampler, p: float, trials: int,
              rng: np.random.Generator) -> tuple[float, tuple]:
    """Pr[f(X + E1) != f(X + E2)] with two independent noise draws per sample."""
    x = source_sampler(rng, trials)
    d1 = decoder(_noisy(x, p, rng))
    d2 = decoder(_noisy(x, p, rng))
    disagree = int((d1 != d2).sum())
    return disagree / trials, wilson_interval(disagree, trials)


def prc_test2(decoder, source_sampler, p: float, trials: int,
              rng: np.random.Generator) -> tuple[float, tuple]:
    """Signed bias E[g(X + E)] in [-1, 1]."""
    x = source_sampler(rng, trials)
    g = decoder(_noisy(x, p, rng)).astype(np.int64)
    ones = int((g > 0).sum())
    lo, hi = wilson_interval(ones, trials)
    return float(g.mean()), (2 * lo - 1, 2 * hi - 1)


@dataclass(frozen=True)
class PrcScheme:
    """A public 1-bit code: two codeword distributions and a public decoder."""
    name: str
    n: int
    sample: object                # sample(i, rng, m) -> uint8 matrix
    decoder: object


def shipped_schemes() -> list:
    def point_mass(i, rng, m):
        return np.full((m, 1), i, dtype=np.uint8)

    def repetition(i, rng, m):
        return np.full((m, 101), i, dtype=np.uint8)

    def uniform_any(i, rng, m):
        return rng.integers(0, 2, size=(m, 33), dtype=np.uint8)

    return [
        PrcScheme("trivial-1bit", 1, point_mass, identity_decoder()),
        PrcScheme("repetition-101", 101, repetition, majority_decoder(101)),
        PrcScheme("uniform-scheme", 33, uniform_any, majority_decoder(33)),
    ]


def prc_bound_check(scheme: PrcScheme, p: float, trials: int,
                    rng: np.random.Generator, eps_margin: float = 0.02,
                    adv_margin: float = 0.05) -> dict:
    """Executable form of the public-code impossibility: measure the decoding
    error and the Test-1/Test-2 gaps between the average codeword law and
    uniform; the dichotomy fails only if the error is below p/4 - eps_margin
    AND no test distinguishes with advantage above adv_margin."""
    def average_sampler(rng_, m):
        labels = rng_.integers(0, 2, size=m)
        out = np.empty((m, scheme.n), dtype=np.uint8)
        for i in (0, 1):
            sel = labels == i
            out[sel] = scheme.sample(i, rng_, int(sel.sum()))
        return out

    def uniform_sampler(rng_, m):
        return rng_.integers(0, 2, size=(m, scheme.n), dtype=np.uint8)

    errors = 0
    for i in (0, 1):
        x = scheme.sample(i, rng, trials // 2)
        dec = scheme.decoder(_noisy(x, p, rng))
        errors += int((dec != (2 * i - 1)).sum())
    eps_hat = errors / (2 * (trials // 2))

    r1_a, _ = prc_test1(scheme.decoder, average_sampler, p, trials, rng)
    r1_u, _ = prc_test1(scheme.decoder, uniform_sampler, p, trials, rng)
    r2_a, _ = prc_test2(scheme.decoder, average_sampler, p, trials, rng)
    r2_u, _ = prc_test2(scheme.decoder, uniform_sampler, p, trials, rng)
    advantage = max(abs(r1_a - r1_u), abs(r2_a - r2_u) / 2.0)
    dichotomy = not (eps_hat < p / 4.0 - eps_margin and advantage < adv_margin)
    return {"scheme": scheme.name, "eps_hat": eps_hat, "advantage": advantage,
            "test1": (r1_a, r1_u), "test2": (r2_a, r2_u), "dichotomy": dichotomy}
