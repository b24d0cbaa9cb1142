"""The bundle sampler: embeds one hidden bit into any sample-access
distribution while matching that distribution exactly, at the price of a
computable, symmetric decoding error.

The published index is uniform over the bundle whenever the masked bit is
uniform, which holds for any sender bit law because the mask bit is fresh
public randomness; exactness therefore never depends on what is embedded.
The error channel is a BSC whose crossover is an explicit average over the
extractor seed space, computed exactly below the seed cap and by Monte Carlo
above it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .primitives import ExtractorSeed, canonical_int, ext_bit
from .stats import wilson_interval

EXACT_SEED_CAP = 1 << 20

_pp_serial = itertools.count()


def lhl_epsilon(entropy_bound: float) -> float:
    """Extractor error for a one-bit pairwise-independent family on a source
    of min-entropy c: eps = (1/2) * 2^((1-c)/2)."""
    return 0.5 * 2.0 ** ((1.0 - entropy_bound) / 2.0)


def bundle_size_for(security: float, entropy_bound: float, constant: int = 8) -> int:
    """Bundle size L = ceil(constant * security / eps^2).

    The constant 8 makes the Hoeffding tail in the BSC-property proof fall
    below 2^-security.
    """
    eps = lhl_epsilon(entropy_bound)
    return int(np.ceil(constant * security / (eps * eps)))


@dataclass(frozen=True)
class BundlePublicParams:
    """Public per-bit parameters: extractor seed, mask bit, bundle size, and
    the declared entropy bound of the carrier distribution.

    Params must never be reused across embedded bits; each instance carries a
    serial so registries can reject re-consumption of the same object while
    allowing independently drawn value collisions (inevitable at small seed
    widths).
    """

    seed: ExtractorSeed
    mask_bit: int
    bundle_size: int
    entropy_bound: float
    serial: int = field(default_factory=lambda: next(_pp_serial))

    def __post_init__(self):
        if self.bundle_size < 1:
            raise ValueError("bundle_size must be >= 1")
        if self.mask_bit not in (0, 1):
            raise ValueError("mask_bit must be a bit")

    @classmethod
    def fresh(cls, width: int, bundle_size: int, entropy_bound: float,
              pp_rng: np.random.Generator) -> "BundlePublicParams":
        return cls(ExtractorSeed.random(width, pp_rng),
                   int(pp_rng.integers(0, 2)), bundle_size, entropy_bound)

    def key(self) -> int:
        return self.serial


@dataclass(frozen=True)
class BundleOutcome:
    published: int                    # canonical sample
    published_index: int
    decode_correct: bool              # the noiseless feedback flag
    partition_sizes: tuple            # (|I0|, |I1|, |I*|)
    chosen_branch: str                # 'star' or 'labeled'
    candidates: tuple                 # retained for ComputeBSC

    def __post_init__(self):
        n0, n1, nstar = self.partition_sizes
        if nstar != abs(n0 - n1):
            raise ValueError("|I*| must equal ||I0| - |I1||")
        if self.chosen_branch == "labeled" and not self.decode_correct:
            raise ValueError("labeled branch always decodes correctly")


def _labels(encodings: np.ndarray, seed: ExtractorSeed) -> np.ndarray:
    masked = np.bitwise_and(encodings.astype(np.uint64), np.uint64(seed.a_mask))
    return ((np.bitwise_count(masked) & 1) ^ seed.offset).astype(np.uint8)


def embed_on_candidates(pp: BundlePublicParams, b: int, encodings: np.ndarray,
                        rng: np.random.Generator) -> BundleOutcome:
    """Core of Embed once the bundle has been drawn.

    Partitions by extractor label, matches the two classes at size
    m = min(|I0|, |I1|) taking the first m indices of each (fixed for
    determinism), and publishes either a uniform leftover index (with
    probability |I*|/L) or a uniform index of the masked class.
    """
    L = pp.bundle_size
    if encodings.shape[0] != L:
        raise ValueError(f"bundle has {encodings.shape[0]} candidates, expected {L}")
    beta = (b ^ pp.mask_bit) & 1
    labels = _labels(encodings, pp.seed)
    pos1 = np.flatnonzero(labels)
    pos0 = np.flatnonzero(labels == 0)
    n0, n1 = pos0.size, pos1.size
    m = min(n0, n1)
    nstar = L - 2 * m
    if rng.random() < nstar / L:
        # leftover indices all carry the majority label
        star = pos0[m:] if n0 > n1 else pos1[m:]
        j = int(star[rng.integers(0, star.size)])
        branch = "star"
    else:
        cls = pos1 if beta == 1 else pos0
        j = int(cls[rng.integers(0, m)])
        branch = "labeled"
    correct = bool(labels[j] == beta)
    return BundleOutcome(int(encodings[j]), j, correct, (n0, n1, nstar), branch,
                         tuple(int(v) for v in encodings))


def embed(pp: BundlePublicParams, b: int, sampler, rng: np.random.Generator
          ) -> BundleOutcome:
    """Embed bit b into a fresh bundle drawn from ``sampler``.

    ``sampler(rng)`` must yield canonical-width samples (ints below
    2^seed.width). The published sample is marginally distributed exactly as
    the sampler's law when b is uniform, for every fixed pp.
    """
    width = pp.seed.width
    encodings = np.array(
        [canonical_int(sampler(rng), width) for _ in range(pp.bundle_size)],
        dtype=np.uint64)
    return embed_on_candidates(pp, b, encodings, rng)


def decode(pp: BundlePublicParams, x) -> int:
    """Receiver side: ext(s, x) xor r."""
    return ext_bit(pp.seed, x) ^ pp.mask_bit


@dataclass(frozen=True)
class BscEstimate:
    p: float
    mode: str
    ci: tuple | None = None


def compute_bsc(candidates, width: int, mode: str = "exact",
                rng: np.random.Generator | None = None,
                exact_cap: int = EXACT_SEED_CAP,
                mc_seed_draws: int = 100_000) -> BscEstimate:
    """Crossover probability of the bundle channel for a realized bundle.

    Exact mode returns (1/2^d) * sum_s |I*(s,B)| / (2L) by enumerating the
    seed space; the offset bit swaps the two label classes and leaves |I*|
    unchanged, so the enumeration runs over the 2^w parity masks. Monte Carlo
    mode samples seeds and reports a Wilson interval.
    """
    enc = np.asarray(candidates, dtype=np.uint64)
    L = enc.size
    values, counts = np.unique(enc, return_counts=True)
    if mode == "exact":
        if (1 << (width + 1)) > exact_cap:
            raise ValueError(
                f"seed space 2^{width + 1} exceeds exact cap {exact_cap}; "
                "use mode='monte_carlo'")
        total = 0.0
        signs_cache = counts.astype(np.int64)
        chunk = 1 << 12
        for start in range(0, 1 << width, chunk):
            a = np.arange(start, min(start + chunk, 1 << width), dtype=np.uint64)
            par = np.bitwise_count(a[:, None] & values[None, :]) & np.uint64(1)
            diff = np.abs((signs_cache[None, :] * (1 - 2 * par.astype(np.int64)))
                          .sum(axis=1))
            total += float(diff.sum())
        return BscEstimate(total / (1 << width) / (2 * L), "exact")
    if mode == "monte_carlo":
        if rng is None:
            raise ValueError("monte_carlo mode needs an rng")
        a = rng.integers(0, 1 << width, size=mc_seed_draws, dtype=np.uint64)
        par = np.bitwise_count(a[:, None] & values[None, :]) & np.uint64(1)
        diff = np.abs((counts.astype(np.int64)[None, :]
                       * (1 - 2 * par.astype(np.int64))).sum(axis=1))
        vals = diff / (2.0 * L)
        lo, hi = wilson_interval(float(vals.sum()), mc_seed_draws)
        return BscEstimate(float(vals.mean()), "monte_carlo", (lo, hi))
    raise ValueError(f"unknown mode {mode!r}")


def embed_stream(pps, bits, samplers, rng: np.random.Generator,
                 bsc_mode: str = "exact") -> tuple[list, list, list]:
    """Embed a bit sequence, one fresh params object per position.

    Returns (outcomes, feedback flags, per-position crossovers). Positions
    behave as independent BSC uses; reuse of params within the stream is
    rejected.
    """
    if not (len(pps) == len(bits) == len(samplers)):
        raise ValueError("pps, bits, samplers must have equal lengths")
    seen = set()
    for pp in pps:
        k = pp.key()
        if k in seen:
            raise ValueError("bundle params reused within the stream")
        seen.add(k)
    outcomes, feedback, crossovers = [], [], []
    for pp, b, sampler in zip(pps, bits, samplers):
        out = embed(pp, int(b), sampler, rng)
        outcomes.append(out)
        feedback.append(out.decode_correct)
        crossovers.append(
            compute_bsc(out.candidates, pp.seed.width, mode=bsc_mode, rng=rng).p)
    return outcomes, feedback, crossovers


# --- fixed-atom fast paths ----------------------------------------------------
#
# When the carrier distribution has few atoms (every fixture here), the seed
# average in ComputeBSC collapses onto the distinct label patterns the seed
# space induces on the atom set. Precomputing that pattern table makes the
# per-bundle exact crossover O(#patterns) instead of O(2^w).

class AtomPatternTable:
    def __init__(self, encodings: np.ndarray, width: int):
        enc = np.asarray(encodings, dtype=np.uint64)
        if np.unique(enc).size != enc.size:
            raise ValueError("atom encodings must be distinct")
        if enc.size > 64:
            raise ValueError("pattern table supports at most 64 atoms")
        self.width = width
        self.encodings = enc
        chunk = 1 << 14
        pattern_ids = {}
        weights = []
        patterns = []
        shifts = (np.uint64(1) << np.arange(enc.size, dtype=np.uint64))
        for start in range(0, 1 << width, chunk):
            a = np.arange(start, min(start + chunk, 1 << width), dtype=np.uint64)
            par = (np.bitwise_count(a[:, None] & enc[None, :])
                   & np.uint64(1)).astype(np.uint64)
            ids = (par * shifts[None, :]).sum(axis=1, dtype=np.uint64)
            uniq, cnt = np.unique(ids, return_counts=True)
            for u, c in zip(uniq.tolist(), cnt.tolist()):
                if u not in pattern_ids:
                    pattern_ids[u] = len(patterns)
                    patterns.append([(u >> i) & 1 for i in range(enc.size)])
                    weights.append(0)
                weights[pattern_ids[u]] += c
        self.patterns = np.array(patterns, dtype=np.uint8)       # (P, atoms)
        self.weights = np.array(weights, dtype=float) / (1 << width)
        self.signs = (1 - 2 * self.patterns.astype(np.int64))    # (P, atoms)

    def exact_p(self, atom_counts: np.ndarray) -> float:
        """Exact ComputeBSC value for a bundle given per-atom counts."""
        L = int(atom_counts.sum())
        diff = np.abs(self.signs @ atom_counts.astype(np.int64))
        return float((self.weights * diff).sum()) / (2 * L)

    def sample_pattern_ids(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.patterns.shape[0], size=size, p=self.weights)


def fixed_bundle_error_trials(atom_counts: np.ndarray, table: AtomPatternTable,
                              b: int, trials: int,
                              rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo of the error event for one realized bundle over fresh
    public params (seed pattern + mask) and embed coins; its mean estimates
    the exact ComputeBSC value of that bundle for either b."""
    L = int(atom_counts.sum())
    n1_by_pattern = table.patterns.astype(np.int64) @ atom_counts.astype(np.int64)
    pat = table.sample_pattern_ids(rng, trials)
    n1 = n1_by_pattern[pat]
    n0 = L - n1
    nstar = np.abs(n0 - n1)
    maj = (n1 > n0).astype(np.uint8)
    r = rng.integers(0, 2, size=trials, dtype=np.uint8)
    beta = (b ^ r).astype(np.uint8)
    star = rng.random(trials) < nstar / L
    return star & (maj != beta)


def embed_error_trials(law, L: int, b: int, trials: int,
                       rng: np.random.Generator,
                       table: AtomPatternTable | None = None,
                       chunk: int = 8192) -> np.ndarray:
    """Vectorized Monte Carlo of the embed/decode error event.

    Each trial draws a fresh bundle from ``law`` (a ResponseLaw-like object
    with draw_indices and encodings), a fresh seed label pattern, and a fresh
    mask bit, then replays the branch choice. Returns the boolean error
    vector; by the BSC property its mean estimates the same p for either b.
    """
    if table is None:
        table = AtomPatternTable(law.encodings, law.width)
    pattern_bits = table.patterns
    errors = np.empty(trials, dtype=bool)
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        idx = law.draw_indices(rng, size * L).reshape(size, L)
        pat = table.sample_pattern_ids(rng, size)
        labels = pattern_bits[pat[:, None], idx]
        n1 = labels.sum(axis=1).astype(np.int64)
        n0 = L - n1
        nstar = np.abs(n0 - n1)
        maj = (n1 > n0).astype(np.uint8)
        r = rng.integers(0, 2, size=size, dtype=np.uint8)
        beta = (b ^ r).astype(np.uint8)
        star = rng.random(size) < nstar / L
        errors[done:done + size] = star & (maj != beta)
        done += size
    return errors
