"""Pseudorandom-transcript key exchange backends for the compilers.

Two backends: a toy Diffie-Hellman group (prime-order subgroup of a safe
prime near 2^17, elements rejection-encoded into 32-bit strings that are
statistically uniform), and an ideal functionality whose transcript is
exactly uniform by construction. The ideal backend exists so compiler tests
are not confounded by toy-group artifacts.

Security at these sizes is nil and not claimed; only correctness and
transcript uniformity are tested.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .primitives import BitVector

# pinned toy group: q prime, P = 2q + 1 prime, g = 4 generates the
# quadratic-residue subgroup of order q
TOY_Q = 65393
TOY_P = 2 * TOY_Q + 1
TOY_G = 4
TOY_MSG_BITS = 32
_REJECT_BUDGET = 64


@dataclass
class KeSession:
    """One completed key-exchange session, however it was carried."""
    secrets_a: dict
    secrets_b: dict
    key_a: BitVector
    key_b: BitVector
    agreed: bool
    transcript: dict
    channel_uses: int


def _kdf(label: bytes, payload: bytes, key_bits: int) -> BitVector:
    digest = hashlib.sha256(b"covertlab-prke-v1|" + label + b"|" + payload).digest()
    value = int.from_bytes(digest, "big") >> (256 - key_bits)
    return BitVector.from_int(value, key_bits)


def _bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


class IdealBackend:
    """Exactly-uniform two-message functionality: both messages are fresh
    uniform strings and the key hashes the ordered transcript, so equal
    reconstructed transcripts give equal keys with certainty."""

    kind = "ideal"

    def __init__(self, msg_bits: int = 32, key_bits: int = 128):
        self.msg_bits = msg_bits
        self.key_bits = key_bits

    def message_for(self, role: str, rng: np.random.Generator):
        bits = BitVector(rng.integers(0, 2, self.msg_bits, dtype=np.uint8))
        return bits, {"own": bits}

    def messages(self, rng: np.random.Generator):
        # non-adaptive by construction: each party draws from its own stream
        rng_a, rng_b = rng.spawn(2)
        m_a, sa = self.message_for("A", rng_a)
        m_b, sb = self.message_for("B", rng_b)
        return m_a, m_b, sa, sb

    def derive(self, secrets: dict, other_bits, role: str) -> BitVector:
        own = secrets["own"].bits
        other = np.asarray(other_bits, dtype=np.uint8)
        if other.size != self.msg_bits:
            raise ValueError(f"message length {other.size} != {self.msg_bits}")
        ordered = (own, other) if role == "A" else (other, own)
        return _kdf(b"ideal", _bits_to_bytes(np.concatenate(ordered)),
                    self.key_bits)


def qr_index(x: int, p: int = TOY_P) -> int:
    """Canonical index of a quadratic residue: exactly one of {x, p-x} is a
    residue (p = 3 mod 4), and min(x, p-x) - 1 ranges over [0, q)."""
    return min(x, p - x) - 1


def element_from_index(idx: int, p: int = TOY_P, q: int = TOY_Q) -> int:
    x = idx + 1
    return x if pow(x, q, p) == 1 else p - x


def encode_element(x: int, rng: np.random.Generator, width: int = TOY_MSG_BITS,
                   q: int = TOY_Q) -> int:
    """Uniform fixed-width encoding of a group element.

    Lifts the canonical index by a random multiple of q and re-draws until
    the value falls below the largest multiple of q within 2^width; over a
    uniform element the encoding is uniform on [0, q * floor(2^w / q)), at
    exact statistical distance (2^w mod q) / 2^w from uniform.
    """
    idx = qr_index(x)
    k_max = (1 << width) // q
    for _ in range(_REJECT_BUDGET):
        j = int(rng.integers(0, k_max + 1))
        e = idx + q * j
        if e < k_max * q:
            return e
    raise RuntimeError("encoding rejection budget exhausted; resample session")


def decode_element(e: int, p: int = TOY_P, q: int = TOY_Q) -> int:
    return element_from_index(e % q, p, q)


def encoding_tv(q: int = TOY_Q, width: int = TOY_MSG_BITS) -> float:
    """Exact TV distance of the encoded message from uniform width-bit strings."""
    return ((1 << width) % q) / float(1 << width)


class ToyGroupBackend:
    """Diffie-Hellman in the order-q subgroup, messages 32-bit encoded."""

    kind = "toy_group"

    def __init__(self, key_bits: int = 128, q: int = TOY_Q, p: int = TOY_P,
                 g: int = TOY_G):
        self.key_bits = key_bits
        self.q, self.p, self.g = q, p, g
        self.msg_bits = TOY_MSG_BITS

    def message_for(self, role: str, rng: np.random.Generator):
        exp = int(rng.integers(1, self.q))
        enc = encode_element(pow(self.g, exp, self.p), rng)
        return BitVector.from_int(enc, self.msg_bits), {"exp": exp}

    def messages(self, rng: np.random.Generator):
        rng_a, rng_b = rng.spawn(2)
        m_a, sa = self.message_for("A", rng_a)
        m_b, sb = self.message_for("B", rng_b)
        return m_a, m_b, sa, sb

    def derive(self, secrets: dict, other_bits, role: str) -> BitVector:
        other = np.asarray(other_bits, dtype=np.uint8)
        if other.size != self.msg_bits:
            raise ValueError(f"message length {other.size} != {self.msg_bits}")
        e = BitVector(other).to_int()
        element = decode_element(e, self.p, self.q)
        shared = pow(element, secrets["exp"], self.p)
        return _kdf(b"toy-group", qr_index(shared, self.p).to_bytes(4, "big"),
                    self.key_bits)


def make_backend(kind: str, **kwargs):
    if kind == "ideal":
        return IdealBackend(**kwargs)
    if kind == "toy_group":
        return ToyGroupBackend(**kwargs)
    raise ValueError(f"unknown backend kind {kind!r}")


def prke_messages(backend, rng: np.random.Generator):
    """Non-adaptive message pair plus both parties' secrets."""
    return backend.messages(rng)


def prke_derive(backend, secrets: dict, other_bits, role: str) -> BitVector:
    """Deterministic key from own secrets and the (possibly corrupted)
    received message; on an un-noised transcript both roles derive equal keys."""
    return backend.derive(secrets, other_bits, role)


def run_noiseless(backend, rng: np.random.Generator) -> KeSession:
    m_a, m_b, sa, sb = backend.messages(rng)
    key_a = backend.derive(sa, m_b.bits, "A")
    key_b = backend.derive(sb, m_a.bits, "B")
    return KeSession(sa, sb, key_a, key_b, key_a == key_b,
                     {"sent_a": m_a, "sent_b": m_b}, 0)


def brute_force_dlog(element: int, g: int = TOY_G, p: int = TOY_P,
                     q: int = TOY_Q) -> int:
    """Exhaustive discrete log in the toy subgroup; oracle for q <= 2^20."""
    if q > (1 << 20):
        raise ValueError("brute force capped at q <= 2^20")
    acc = 1
    for e in range(q):
        if acc == element:
            return e
        acc = (acc * g) % p
    raise ValueError("element not in the subgroup")
