"""Bit-level foundations: GF(2) bit vectors, the feedback binary symmetric
channel, exact-weight sparse sampling, and the pairwise-independent one-bit
extractor family used by every sampler in the stack.

All randomized operations take an explicit numpy Generator; identical seeds
give bit-identical runs. Every type here is an immutable value, so concurrent
trial workers are safe as long as each owns its own generator stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BitVector:
    """Immutable vector over GF(2).

    XOR and inner products are defined only for equal lengths; mismatches
    raise ValueError.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0/1")
        arr = arr.copy()
        arr.setflags(write=False)
        self._bits = arr

    @classmethod
    def from_int(cls, value: int, length: int) -> "BitVector":
        """LSB-first bits of ``value``; ``value`` must fit in ``length`` bits."""
        if value < 0 or value >> length:
            raise ValueError("value does not fit in length bits")
        return cls([(value >> i) & 1 for i in range(length)])

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(np.zeros(length, dtype=np.uint8))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def to_int(self) -> int:
        """LSB-first integer encoding."""
        value = 0
        for i, b in enumerate(self._bits):
            value |= int(b) << i
        return value

    def weight(self) -> int:
        return int(self._bits.sum())

    def __len__(self) -> int:
        return self._bits.size

    def __iter__(self):
        return iter(self._bits)

    def __getitem__(self, i):
        return int(self._bits[i])

    def __xor__(self, other: "BitVector") -> "BitVector":
        self._check_len(other)
        return BitVector(self._bits ^ other._bits)

    def inner(self, other: "BitVector") -> int:
        """Inner product over GF(2)."""
        self._check_len(other)
        return int(np.bitwise_and(self._bits, other._bits).sum() & 1)

    def concat(self, other: "BitVector") -> "BitVector":
        return BitVector(np.concatenate([self._bits, other._bits]))

    def _check_len(self, other: "BitVector"):
        if len(self) != len(other):
            raise ValueError(f"length mismatch: {len(self)} vs {len(other)}")

    def __eq__(self, other) -> bool:
        return isinstance(other, BitVector) and np.array_equal(self._bits, other._bits)

    def __hash__(self) -> int:
        return hash(self._bits.tobytes())

    def __repr__(self) -> str:
        return f"BitVector('{''.join(str(int(b)) for b in self._bits)}')"


def hamming_distance(a: BitVector, b: BitVector) -> int:
    """Number of disagreeing positions; lengths must match."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return int((a.bits ^ b.bits).sum())


def sample_sparse(n: int, k: int, rng: np.random.Generator) -> BitVector:
    """Uniform vector of Hamming weight exactly k in GF(2)^n."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    out = np.zeros(n, dtype=np.uint8)
    if k:
        out[rng.choice(n, size=k, replace=False)] = 1
    return BitVector(out)


# --- the binary symmetric channel -------------------------------------------

@dataclass(frozen=True)
class ChannelSpec:
    """Schedule of per-use crossover probabilities under a global bound.

    Every scheduled crossover must be in [0, 1/2) and at most ``bound``;
    crossover exactly 1/2 is rejected rather than clamped because the
    signaling formulas divide by (1 - 2 p_t).
    """

    crossover_probs: tuple
    bound: float

    def __post_init__(self):
        probs = tuple(float(p) for p in self.crossover_probs)
        object.__setattr__(self, "crossover_probs", probs)
        if not 0.0 < self.bound < 0.5:
            raise ValueError(f"bound must be in (0, 1/2), got {self.bound}")
        for t, p in enumerate(probs):
            if not 0.0 <= p < 0.5:
                raise ValueError(f"crossover_probs[{t}]={p} outside [0, 1/2)")
            if p > self.bound:
                raise ValueError(f"crossover_probs[{t}]={p} exceeds bound {self.bound}")

    def __len__(self) -> int:
        return len(self.crossover_probs)

    @classmethod
    def constant(cls, p: float, n: int, bound: float | None = None) -> "ChannelSpec":
        return cls((p,) * n, bound if bound is not None else max(p, 1e-12))


@dataclass(frozen=True)
class ChannelUse:
    sent: int
    received: int
    flipped: bool
    crossover: float

    def __post_init__(self):
        if self.flipped != (self.sent != self.received):
            raise ValueError("flipped flag inconsistent with sent/received")


def flip_bit(bit: int, crossover: float, rng: np.random.Generator) -> ChannelUse:
    """One channel use; the sender-side feedback is the ``flipped`` flag."""
    if not 0.0 <= crossover < 0.5:
        raise ValueError(f"crossover {crossover} outside [0, 1/2)")
    flipped = bool(rng.random() < crossover)
    return ChannelUse(bit, bit ^ flipped, flipped, crossover)


def bsc_transmit(bits: BitVector, spec: ChannelSpec,
                 rng: np.random.Generator) -> list[ChannelUse]:
    """Transmit ``bits`` over the scheduled channel, recording feedback.

    Uses the first len(bits) scheduled crossovers; more bits than scheduled
    uses is rejected.
    """
    n = len(bits)
    if n > len(spec):
        raise ValueError(f"{n} bits but only {len(spec)} scheduled channel uses")
    probs = np.asarray(spec.crossover_probs[:n])
    flips = rng.random(n) < probs
    return [
        ChannelUse(int(b), int(b) ^ int(f), bool(f), float(p))
        for b, f, p in zip(bits.bits, flips, probs)
    ]


def bsc_flip_mask(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Vector of n i.i.d. Bernoulli(p) flips as uint8; fast path for big sessions."""
    if not 0.0 <= p < 0.5:
        raise ValueError(f"crossover {p} outside [0, 1/2)")
    return (rng.random(n) < p).astype(np.uint8)


# --- pairwise-independent one-bit extractor ----------------------------------
#
# Family: ext_{(a,b)}(x) = <a, x> xor b over GF(2), seed (a, b), d = w + 1.
# Exact pairwise independence makes seed enumeration in ComputeBSC exact.

@dataclass(frozen=True)
class ExtractorSeed:
    """Seed (a, b) for the inner-product-plus-offset family at width w.

    seed_bits holds the w bits of a (LSB-first) followed by the offset bit;
    d = w + 1.
    """

    seed_bits: BitVector
    width: int
    a_mask: int = field(init=False)
    offset: int = field(init=False)

    def __post_init__(self):
        if len(self.seed_bits) != self.width + 1:
            raise ValueError(
                f"seed length {len(self.seed_bits)} != width+1 = {self.width + 1}")
        a = 0
        for i in range(self.width):
            a |= self.seed_bits[i] << i
        object.__setattr__(self, "a_mask", a)
        object.__setattr__(self, "offset", self.seed_bits[self.width])

    @classmethod
    def from_ints(cls, a: int, b: int, width: int) -> "ExtractorSeed":
        bits = BitVector.from_int(a | ((b & 1) << width), width + 1)
        return cls(bits, width)

    @classmethod
    def random(cls, width: int, rng: np.random.Generator) -> "ExtractorSeed":
        a = int(rng.integers(0, 1 << width)) if width else 0
        b = int(rng.integers(0, 2))
        return cls.from_ints(a, b, width)


def canonical_int(x, width: int) -> int:
    """Canonicalize an extractor input to an integer below 2^width.

    Accepts an int already in range or a BitVector of exactly the family
    width (LSB-first).
    """
    if isinstance(x, BitVector):
        if len(x) != width:
            raise ValueError(f"BitVector length {len(x)} != family width {width}")
        return x.to_int()
    x = int(x)
    if x < 0 or x >> width:
        raise ValueError(f"input {x} not canonical at width {width}")
    return x


def ext_bit(seed: ExtractorSeed, x) -> int:
    """Extractor output ext_{(a,b)}(x) = <a, x> xor b."""
    v = canonical_int(x, seed.width)
    return ((v & seed.a_mask).bit_count() & 1) ^ seed.offset


def fold_to_width(value: int, bit_len: int, width: int) -> int:
    """XOR-fold an injective bit encoding down to the family width.

    Consecutive width-bit blocks (LSB-first) are XORed together. Folding can
    destroy injectivity, so fixtures keep canonical encodings at most width
    bits long; the fold exists for longer messages only.
    """
    if value < 0 or (bit_len and value >> bit_len):
        raise ValueError("value does not fit in bit_len bits")
    out = 0
    mask = (1 << width) - 1
    while True:
        out ^= value & mask
        value >>= width
        if not value:
            return out
