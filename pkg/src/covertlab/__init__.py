"""Desk-scale laboratory for covert conversations over mock LLM transcripts.

Subpackages cover the full stack: bit-level primitives and extractors,
finite-table conversation models, the exact-distribution bundle sampler,
feedback signaling over the BSC, sparse-parity and toy-group key exchange,
the steganographic overlays, the adversarial distinguishers, and a seeded
experiment harness.
"""

__version__ = "0.1.0"
