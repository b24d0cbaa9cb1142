"""Finite-table autoregressive mock models and the two-party conversation
engine that defines the honest protocol.

Models are tables, not networks, so every response law can be enumerated
exactly; that is what makes the distribution-equality experiments possible at
desk scale. Entropy is measured in bits (log base 2) everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .primitives import fold_to_width

PROB_TOL = 1e-12


class MockModel:
    """Autoregressive next-token table over a finite alphabet.

    ``rule`` maps (prompt_id, prefix tuple) to a dict of token probabilities.
    It may be a nested dict (enumerable, serializable) or a callable with the
    same signature for large fixtures. Generation is forced to terminate at
    ``max_response_len`` content tokens by appending the terminator.
    """

    def __init__(self, alphabet, terminator: str, rule, max_response_len: int):
        self.alphabet = tuple(alphabet)
        self.terminator = terminator
        self.max_response_len = int(max_response_len)
        self.rule = rule
        if terminator not in self.alphabet:
            raise ValueError("terminator must be in the alphabet")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet tokens must be distinct")
        for tok in self.alphabet:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"token {tok!r} is empty or contains whitespace")
        if self.max_response_len < 1:
            raise ValueError("max_response_len must be positive")
        self._token_index = {tok: i for i, tok in enumerate(self.alphabet)}
        if isinstance(rule, dict):
            self._validate_tables()

    def _validate_tables(self):
        for prompt, table in self.rule.items():
            for prefix, dist in table.items():
                total = sum(dist.values())
                if abs(total - 1.0) > PROB_TOL:
                    raise ValueError(
                        f"distribution for prompt {prompt!r} prefix {prefix!r} "
                        f"sums to {total}, not 1")
                for tok, p in dist.items():
                    if tok not in self._token_index:
                        raise ValueError(f"unknown token {tok!r} in table")
                    if p < 0:
                        raise ValueError("negative probability")

    @property
    def prompts(self) -> tuple:
        if isinstance(self.rule, dict):
            return tuple(self.rule.keys())
        raise TypeError("functional models do not enumerate prompts")

    def next_dist(self, prompt, prefix: tuple) -> dict:
        """Next-token distribution; forced terminator at the length bound."""
        if len(prefix) >= self.max_response_len:
            return {self.terminator: 1.0}
        if isinstance(self.rule, dict):
            if prompt not in self.rule:
                raise ValueError(f"unknown prompt id {prompt!r}")
            table = self.rule[prompt]
            if prefix not in table:
                raise ValueError(
                    f"model table has no entry for prompt {prompt!r}, prefix {prefix!r}")
            return table[prefix]
        return self.rule(prompt, prefix)


def draw_token(dist: dict, rng: np.random.Generator) -> str:
    """One categorical draw; the single rng consumption point for sampling,
    shared with the overlays so zero-payload runs replay bit-identically."""
    tokens = list(dist.keys())
    probs = np.array([dist[t] for t in tokens])
    return tokens[int(rng.choice(len(tokens), p=probs / probs.sum()))]


def sample_response(model: MockModel, prompt, rng: np.random.Generator) -> tuple:
    """Draw one full response (content tokens followed by the terminator)."""
    out = []
    while True:
        tok = draw_token(model.next_dist(prompt, tuple(out)), rng)
        out.append(tok)
        if tok == model.terminator:
            return tuple(out)


def response_probability(model: MockModel, prompt, message: tuple) -> float:
    """Exact probability of ``message`` as a full response (product rule)."""
    if not message or message[-1] != model.terminator:
        raise ValueError("a response must end with the terminator token")
    p = 1.0
    for i, tok in enumerate(message):
        dist = model.next_dist(prompt, tuple(message[:i]))
        p *= dist.get(tok, 0.0)
        if p == 0.0:
            return 0.0
    return p


def empirical_entropy(model: MockModel, prompt, message: tuple) -> float:
    """-log2 of the exact response probability, in bits.

    Zero-probability messages are rejected with a diagnostic rather than
    returning infinity.
    """
    p = response_probability(model, prompt, message)
    if p == 0.0:
        raise ValueError(
            f"message {message!r} has probability 0 under prompt {prompt!r}")
    return -math.log2(p)


def enumerate_responses(model: MockModel, prompt) -> list:
    """All (message, probability) pairs of the response law, by DFS."""
    out = []
    stack = [((), 1.0)]
    while stack:
        prefix, p = stack.pop()
        dist = model.next_dist(prompt, prefix)
        for tok, q in dist.items():
            if q == 0.0:
                continue
            msg = prefix + (tok,)
            if tok == model.terminator:
                out.append((msg, p * q))
            else:
                stack.append((msg, p * q))
    out.sort()
    return out


def content_length(message: tuple, terminator: str) -> int:
    """Token count excluding the single trailing terminator."""
    n = len(message)
    if n and message[-1] == terminator:
        n -= 1
    return n


# --- canonical extractor encodings -------------------------------------------

def token_block_bits(model: MockModel) -> int:
    """Bits per token in the canonical encoding; indices are 1-based so no
    block is all-zero and zero-padding stays injective."""
    return max(1, (len(model.alphabet)).bit_length())


def encode_message(model: MockModel, message: tuple) -> tuple[int, int]:
    """Injective LSB-first bit encoding of the content tokens.

    Returns (value, bit_length). The terminator is dropped; content tokens
    are encoded as 1-based alphabet indices in fixed-width blocks.
    """
    b = token_block_bits(model)
    value = 0
    n = content_length(message, model.terminator)
    for i in range(n):
        idx = model._token_index[message[i]] + 1
        value |= idx << (b * i)
    return value, b * n


def canonical_sample(model: MockModel, message: tuple, width: int) -> int:
    """Canonical extractor input: the injective encoding folded to ``width``."""
    value, bit_len = encode_message(model, message)
    return fold_to_width(value, bit_len, width)


class ResponseLaw:
    """Enumerated response law of one (model, prompt) pair, with canonical
    encodings precomputed at a fixed extractor width.

    This is the fast sample-access object handed to the bundle sampler; the
    sampler itself still only ever *draws* from it.
    """

    def __init__(self, model: MockModel, prompt, width: int):
        pairs = enumerate_responses(model, prompt)
        self.model = model
        self.prompt = prompt
        self.width = width
        self.messages = [m for m, _ in pairs]
        self.probs = np.array([p for _, p in pairs], dtype=float)
        total = self.probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"response law sums to {total}")
        self.probs = self.probs / total
        self._cum = np.cumsum(self.probs)
        self.encodings = np.array(
            [canonical_sample(model, m, width) for m in self.messages],
            dtype=np.uint64)
        if len(set(self.encodings.tolist())) != len(self.messages):
            raise ValueError("canonical encodings collide; increase width")
        self.entropies = -np.log2(self.probs)

    def __len__(self) -> int:
        return len(self.messages)

    def draw_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.searchsorted(self._cum, rng.random(size), side="right").astype(
            np.int64)

    def draw_index(self, rng: np.random.Generator) -> int:
        return int(self.draw_indices(rng, 1)[0])

    def min_entropy(self) -> float:
        return float(-np.log2(self.probs.max()))


# --- conversations ------------------------------------------------------------

@dataclass(frozen=True)
class ConversationPolicy:
    """Deterministic prompt selection from (private context, state, transcript).

    ``prompt_selector(context, state, rounds_so_far) -> (prompt_id, new_state)``.
    """

    private_context: str
    prompt_selector: Callable
    initial_state: object = None


@dataclass(frozen=True)
class TranscriptRound:
    speaker: str                 # 'A' or 'B'
    prompt: object
    message: tuple
    empirical_entropy: float
    eligible: bool


@dataclass
class Transcript:
    rounds: list = field(default_factory=list)
    eligibility_threshold: int = 0

    def __len__(self) -> int:
        return len(self.rounds)

    def messages(self) -> list:
        return [r.message for r in self.rounds]

    def total_entropy(self) -> float:
        return sum(r.empirical_entropy for r in self.rounds)


def eligible_rounds(transcript: Transcript, threshold: int,
                    speaker: str | None = None) -> list:
    """Indices of rounds whose content length exceeds ``threshold``.

    Eligibility is a deterministic function of the transcript, so both
    parties (and the auditor) compute identical sets.
    """
    out = []
    for i, r in enumerate(transcript.rounds):
        if speaker is not None and r.speaker != speaker:
            continue
        terminator = r.message[-1] if r.message else ""
        if content_length(r.message, terminator) > threshold:
            out.append(i)
    return out


def run_conversation(policy_a: ConversationPolicy, policy_b: ConversationPolicy,
                     model_a: MockModel, model_b: MockModel, rounds: int,
                     rng: np.random.Generator,
                     eligibility_threshold: int = 0,
                     max_rounds: int = 100_000) -> Transcript:
    """Run the honest protocol for exactly ``rounds`` rounds.

    Speakers alternate starting with A. Each message is one model response to
    the prompt the speaker's policy selects; per-round empirical entropies and
    eligibility flags are filled in.
    """
    if rounds > max_rounds:
        raise ValueError(f"rounds {rounds} exceeds configured bound {max_rounds}")
    transcript = Transcript(eligibility_threshold=eligibility_threshold)
    state_a, state_b = policy_a.initial_state, policy_b.initial_state
    for t in range(rounds):
        if t % 2 == 0:
            prompt, state_a = policy_a.prompt_selector(
                policy_a.private_context, state_a, transcript.rounds)
            model, speaker = model_a, "A"
        else:
            prompt, state_b = policy_b.prompt_selector(
                policy_b.private_context, state_b, transcript.rounds)
            model, speaker = model_b, "B"
        message = sample_response(model, prompt, rng)
        entropy = empirical_entropy(model, prompt, message)
        eligible = content_length(message, model.terminator) > eligibility_threshold
        transcript.rounds.append(
            TranscriptRound(speaker, prompt, message, entropy, eligible))
    return transcript
