"""Sparse-parity key exchange over a feedback-free BSC.

Each of the ell parallel iterations exchanges noisy linear sketches of
weight-k secrets; the per-iteration key bits agree with probability
1/2 + 2^(-ck), and one final masked-string transmission amplifies that
correlation into a single shared bit that both sides recover with
overwhelming probability.

Security at desk parameters is trivially breakable and explicitly not
claimed; correctness and statistical sanity of the transcript are what the
experiments measure. GF(2) linear algebra is packed 64 bits per word; the
public matrix is regenerated per session from its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .primitives import BitVector

WORD = 64


def per_bit_xor_bias(k: int, eta: float, p: float) -> float:
    """Piling-up bias of k_A,i xor k_B,i: the bit is Bernoulli(1/2 - bias)
    with bias = 2^(2k-1) * zeta^(2k), zeta = 2*tau*theta."""
    zeta = 2.0 * (0.5 - p) * (0.5 - eta)
    return 2.0 ** (2 * k - 1) * zeta ** (2 * k)


def final_bit_advantage(k: int, eta: float, p: float) -> float:
    """Per-position agreement advantage of the final masked string:
    agreement probability is 1/2 + (1/2)((2 tau)(2 theta))^(2k+1)."""
    return 0.5 * ((1.0 - 2.0 * p) * (1.0 - 2.0 * eta)) ** (2 * k + 1)


def ell_min(k: int, eta: float, p: float, security: int) -> int:
    """Module invariant: ell >= 4 * lambda * 2^(2ck) with 2^(-ck) the final
    per-bit advantage; this makes ell * 2^(-ck) > 2 sqrt(lambda * ell)."""
    adv = final_bit_advantage(k, eta, p)
    return int(math.ceil(4.0 * security / (adv * adv)))


@dataclass(frozen=True)
class LspnParams:
    n: int
    k: int
    eta: float
    ell: int
    security: int          # lambda
    p: float

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise ValueError("need 0 <= k <= n")
        if not 0.0 <= self.eta < 0.5 or not 0.0 <= self.p < 0.5:
            raise ValueError("eta and p must be in [0, 1/2)")
        lo = ell_min(self.k, self.eta, self.p, self.security)
        if self.ell < lo:
            raise ValueError(f"ell={self.ell} below invariant minimum {lo}")

    def threshold(self) -> float:
        return self.ell / 2.0 - math.sqrt(self.security * self.ell)


DESK_PARAMS = LspnParams(n=256, k=3, eta=0.0625, ell=9216, security=8, p=0.0625)


# --- packed GF(2) helpers -------------------------------------------------------

def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, n) 0/1 uint8 matrix into (rows, n/64) uint64 words,
    little-endian within each word; n must be a multiple of 64."""
    rows, n = bits.shape
    if n % WORD:
        raise ValueError("packed path requires n % 64 == 0")
    packed = np.packbits(bits, axis=1, bitorder="little")
    return packed.view(np.uint64).reshape(rows, n // WORD)


def unpack_rows(words: np.ndarray, n: int) -> np.ndarray:
    rows = words.shape[0]
    as_bytes = words.reshape(rows, -1).view(np.uint8)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :n]


def generate_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform public n x n matrix over GF(2) as a 0/1 uint8 array."""
    return rng.integers(0, 2, size=(n, n), dtype=np.uint8)


def sparse_indices(ell: int, n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """ell independent uniform weight-k supports, as an (ell, k) index array.

    Generated in row blocks so large iteration counts stay within a fixed
    memory envelope.
    """
    if k == 0:
        return np.empty((ell, 0), dtype=np.int64)
    out = np.empty((ell, k), dtype=np.int64)
    chunk = max(1, (1 << 24) // max(n, 1))
    for start in range(0, ell, chunk):
        rows = min(chunk, ell - start)
        block = rng.random((rows, n))
        out[start:start + rows] = np.argpartition(block, k - 1, axis=1)[:, :k]
    return out


def _xor_reduce_rows(packed: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """XOR of selected packed rows per output row: packed (n, W), idx (ell, k)."""
    gathered = packed[idx]                       # (ell, k, W)
    return np.bitwise_xor.reduce(gathered, axis=1)


def _gather_bits(words: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Per-row bit gather from packed words: words (ell, W), idx (ell, k)."""
    rows = np.arange(words.shape[0])[:, None]
    w = words[rows, idx >> 6]
    return ((w >> (idx & 63).astype(np.uint64)) & np.uint64(1)).astype(np.uint8)


def _bernoulli_packed(shape_rows: int, n: int, prob: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Packed Bernoulli(prob) bits; probabilities 2^-t (t <= 8) take the fast
    path of ANDing t uniform words, which is exact and an order of magnitude
    cheaper at desk scale."""
    w = n // WORD
    t = math.log2(prob) if prob > 0 else None
    if t is not None and t == int(t) and -8 <= t < 0:
        words = rng.integers(0, 2 ** 64, size=(shape_rows, int(-t), w),
                             dtype=np.uint64)
        return np.bitwise_and.reduce(words, axis=1)
    bits = (rng.random((shape_rows, n)) < prob).astype(np.uint8)
    return pack_rows(bits)


# --- protocol operations ---------------------------------------------------------

def round_messages(c_bits: np.ndarray, params: LspnParams,
                   rng: np.random.Generator) -> dict:
    """One iteration's sketches and secrets, at protocol level.

    Alice sends a = C s + e, Bob sends b^T = r^T C + f^T, both over GF(2).
    """
    n = params.n
    if c_bits.shape != (n, n):
        raise ValueError(f"matrix shape {c_bits.shape} != ({n}, {n})")
    s_idx = np.sort(rng.choice(n, size=params.k, replace=False)) if params.k else \
        np.empty(0, dtype=np.int64)
    r_idx = np.sort(rng.choice(n, size=params.k, replace=False)) if params.k else \
        np.empty(0, dtype=np.int64)
    e = (rng.random(n) < params.eta).astype(np.uint8)
    f = (rng.random(n) < params.eta).astype(np.uint8)
    a = (c_bits[:, s_idx].sum(axis=1) + e) % 2 if params.k else e.copy()
    b = (c_bits[r_idx, :].sum(axis=0) + f) % 2 if params.k else f.copy()
    return {
        "alice_sketch": BitVector(a.astype(np.uint8)),
        "bob_sketch": BitVector(b.astype(np.uint8)),
        "s_idx": s_idx, "r_idx": r_idx,
        "e": BitVector(e), "f": BitVector(f),
    }


def derive_bits(round_data: dict, received_a: BitVector,
                received_b: BitVector) -> tuple[int, int]:
    """Per-iteration key bits: k_A = b~^T s, k_B = r^T a~ over GF(2)."""
    n = len(received_a)
    if len(received_b) != n:
        raise ValueError("received vectors must have the session dimension")
    k_a = int(received_b.bits[round_data["s_idx"]].sum() & 1)
    k_b = int(received_a.bits[round_data["r_idx"]].sum() & 1)
    return k_a, k_b


def final_message(k_a: BitVector, kappa_a: int, eta: float,
                  rng: np.random.Generator) -> BitVector:
    """kappa=1: fresh uniform string; kappa=0: k_A masked by Bernoulli(eta)."""
    ell = len(k_a)
    if kappa_a == 1:
        return BitVector(rng.integers(0, 2, ell, dtype=np.uint8))
    mask = (rng.random(ell) < eta).astype(np.uint8)
    return BitVector(k_a.bits ^ mask)


def final_decision(t_received: BitVector, k_b: BitVector, security: int) -> int:
    """kappa_B = 1 iff hamming(t~, k_B) > ell/2 - sqrt(lambda * ell), strict."""
    ell = len(k_b)
    if len(t_received) != ell:
        raise ValueError("length mismatch in final decision")
    dist = int((t_received.bits ^ k_b.bits).sum())
    return 1 if dist > ell / 2.0 - math.sqrt(security * ell) else 0


@dataclass
class LspnSession:
    params: LspnParams
    matrix_seed: int
    k_a: np.ndarray
    k_b: np.ndarray
    kappa_a: int
    kappa_b: int
    final_distance: int
    agreed: bool
    transcript_words: dict = field(repr=False, default_factory=dict)
    noise_words: dict = field(repr=False, default_factory=dict)

    def transcript_bits(self, limit: int | None = None) -> np.ndarray:
        """Concatenated sent transcript (all sketches then the final string),
        unpacked to 0/1; for statistical batteries."""
        n = self.params.n
        parts = [unpack_rows(self.transcript_words["a"], n).ravel(),
                 unpack_rows(self.transcript_words["b"], n).ravel(),
                 self.transcript_words["t"]]
        bits = np.concatenate(parts)
        return bits[:limit] if limit else bits


def run_protocol(params: LspnParams, rng: np.random.Generator,
                 matrix_seed: int | None = None) -> LspnSession:
    """Full session, iterations batched: sketches, channel, derived strings,
    final masked transmission, and both verdict bits.

    The channel crossover is params.p on every transmitted bit (the protocol
    only relies on p as an upper bound). Secrets have weight exactly k by
    construction (asserted).
    """
    n, k, ell = params.n, params.k, params.ell
    if matrix_seed is None:
        matrix_seed = int(rng.integers(0, 2 ** 63 - 1))
    c_bits = generate_matrix(n, np.random.default_rng(matrix_seed))
    c_packed = pack_rows(c_bits)                     # rows of C
    ct_packed = pack_rows(np.ascontiguousarray(c_bits.T))  # rows of C^T = columns

    s_idx = sparse_indices(ell, n, k, rng)
    r_idx = sparse_indices(ell, n, k, rng)
    assert s_idx.shape == (ell, k) and r_idx.shape == (ell, k)

    a_words = _xor_reduce_rows(ct_packed, s_idx) ^ _bernoulli_packed(ell, n, params.eta, rng)
    b_words = _xor_reduce_rows(c_packed, r_idx) ^ _bernoulli_packed(ell, n, params.eta, rng)

    noise_a = _bernoulli_packed(ell, n, params.p, rng)
    noise_b = _bernoulli_packed(ell, n, params.p, rng)

    # inner products against weight-k secrets: gather k bits per row, no unpack
    k_a = (_gather_bits(b_words ^ noise_b, s_idx).sum(axis=1) & 1).astype(np.uint8)
    k_b = (_gather_bits(a_words ^ noise_a, r_idx).sum(axis=1) & 1).astype(np.uint8)

    kappa_a = int(rng.integers(0, 2))
    t = final_message(BitVector(k_a), kappa_a, params.eta, rng)
    t_noise = (rng.random(ell) < params.p).astype(np.uint8)
    t_recv = BitVector(t.bits ^ t_noise)
    kappa_b = final_decision(t_recv, BitVector(k_b), params.security)
    dist = int((t_recv.bits ^ k_b).sum())

    return LspnSession(
        params=params, matrix_seed=matrix_seed, k_a=k_a, k_b=k_b,
        kappa_a=kappa_a, kappa_b=kappa_b, final_distance=dist,
        agreed=kappa_a == kappa_b,
        transcript_words={"a": a_words, "b": b_words, "t": t.bits},
        noise_words={"a": noise_a, "b": noise_b, "t": t_noise})


def xor_bias_trials(params: LspnParams, trials: int,
                    rng: np.random.Generator) -> float:
    """Empirical Pr[k_A,i xor k_B,i = 1] over ``trials`` fresh iterations;
    checked against the piling-up closed form."""
    scaled = LspnParams(params.n, params.k, params.eta,
                        max(trials, ell_min(params.k, params.eta, params.p,
                                            params.security)),
                        params.security, params.p)
    session = run_protocol(scaled, rng)
    xor = (session.k_a ^ session.k_b)[:trials]
    return float(xor.mean())
