"""Steganographic overlays over mock conversations.

Shared-key path: keyed threshold sampling with per-token PRF units whose
inputs (round, speaker, token index) never repeat, two antithetic virtual
units carrying one code bit per token, and a repetition outer code.

Keyless path: a noise-tolerant key exchange (compiled signaling over
bundle-sampler channel uses, or the sparse-parity protocol) is threaded through the eligible rounds of an
honest conversation; every published message is exactly one model sample, so
the transcript law is preserved exactly round by round.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import (AtomPatternTable, BundlePublicParams, decode,
                     embed_on_candidates)
from .mockmodel import (ConversationPolicy, MockModel, ResponseLaw, Transcript,
                        TranscriptRound, content_length, draw_token)
from .primitives import BitVector, ExtractorSeed, ext_bit
from .signaling import optimal_next_biases, realize_bias_clamped

GRID_BITS = 16


@dataclass(frozen=True)
class SessionKey:
    key: bytes
    origin: str = "given"        # 'given' | 'exchanged'

    def __post_init__(self):
        if self.origin not in ("given", "exchanged"):
            raise ValueError("origin must be 'given' or 'exchanged'")


class KeyRegistry:
    """Interaction-unique keys: a session key may drive one conversation."""

    def __init__(self):
        self._seen = set()

    def consume(self, key: SessionKey):
        if key.key in self._seen:
            raise ValueError("session key reused across conversations")
        self._seen.add(key.key)


@dataclass(frozen=True)
class PrfLabel:
    round_index: int
    speaker: str
    token_index: int

    def __post_init__(self):
        if self.speaker not in ("A", "B"):
            raise ValueError("speaker must be 'A' or 'B'")

    def to_bytes(self) -> bytes:
        # fixed-width big-endian: t (4) | speaker (1) | j (4)
        return (self.round_index.to_bytes(4, "big")
                + self.speaker.encode("ascii")
                + self.token_index.to_bytes(4, "big"))


class LabelRegistry:
    def __init__(self):
        self._seen = set()

    def consume(self, label: PrfLabel):
        if label in self._seen:
            raise ValueError(f"PRF label reused: {label}")
        self._seen.add(label)


def _rotl16(v: int, r: int) -> int:
    r %= GRID_BITS
    return ((v << r) | (v >> (GRID_BITS - r))) & 0xFFFF


class UnitPrf:
    """Per-token unit source.

    'hmac': HMAC-SHA256 over the serialized label, top 53 bits as a float in
    [0,1). 'grid16': an enumerable idealization for exact-law tests — the
    16-bit key rotated by a per-label index, so over the enumerated key space
    each unit is exactly uniform on the 2^16 grid and the threshold bits of
    distinct labels are independent key bits (at most 16 distinct labels).

    The two virtual units of a hypothesis pair are antithetic: hypothesis 1
    uses the complement (bitwise in grid mode), which preserves the exact
    per-token law and makes the two predictions disjoint at p = 1/2.
    """

    def __init__(self, mode: str = "hmac"):
        if mode not in ("hmac", "grid16"):
            raise ValueError(f"unknown PRF mode {mode!r}")
        self.mode = mode
        self._rotations: dict = {}

    def _rotation(self, label: PrfLabel) -> int:
        idx = self._rotations.get(label)
        if idx is None:
            idx = len(self._rotations)
            if idx >= GRID_BITS:
                raise ValueError("grid16 mode supports at most 16 distinct labels")
            self._rotations[label] = idx
        return idx

    def grid_value(self, key_int: int, label: PrfLabel, hypothesis: int = 0) -> int:
        g = _rotl16(key_int & 0xFFFF, self._rotation(label))
        return ((~g) & 0xFFFF) if hypothesis else g

    def unit(self, key: bytes, label: PrfLabel, hypothesis: int = 0) -> float:
        if self.mode == "grid16":
            key_int = int.from_bytes(key[:2], "big")
            return self.grid_value(key_int, label, hypothesis) / float(1 << GRID_BITS)
        digest = _hmac.new(key, label.to_bytes(), hashlib.sha256).digest()
        u = (int.from_bytes(digest[:8], "big") >> 11) / float(1 << 53)
        if hypothesis:
            u = 1.0 - u
            if u >= 1.0:
                u = 0.0
        return u


def prf_unit(key: SessionKey, label: PrfLabel, prf: UnitPrf | None = None,
             registry: LabelRegistry | None = None) -> float:
    """Deterministic unit in [0,1) for a fresh label; reuse is rejected when a
    registry is supplied."""
    if registry is not None:
        registry.consume(label)
    return (prf or UnitPrf()).unit(key.key, label, 0)


def threshold_sample_token(p1: float, r: float) -> int:
    """1 iff r < p1; with uniform r the law is exactly Bernoulli(p1)."""
    if not 0.0 <= p1 <= 1.0:
        raise ValueError("p1 must be in [0, 1]")
    return 1 if r < p1 else 0


# --- shared-key stego on binary token streams ----------------------------------

def _p1_at(p1_source, j: int, prefix: tuple) -> float:
    if callable(p1_source):
        return p1_source(prefix)
    return p1_source[j]


def steg_embed_message(key: SessionKey, payload_bit: int, p1_source, labels,
                       prf: UnitPrf, registry: LabelRegistry | None = None) -> list:
    """Sample one binary message carrying ``payload_bit`` on all its tokens.

    Token j is drawn by threshold sampling with the virtual unit of the payload
    hypothesis; the marginal token law equals the honest law exactly for
    either hypothesis because both units are uniform.
    """
    tokens = []
    for j, label in enumerate(labels):
        if registry is not None:
            registry.consume(label)
        u = prf.unit(key.key, label, payload_bit)
        tokens.append(threshold_sample_token(_p1_at(p1_source, j, tuple(tokens)), u))
    return tokens


def steg_decode_message(key: SessionKey, tokens, labels,
                        prf: UnitPrf) -> tuple[int, tuple]:
    """Two-hypothesis decode: count tokens matching each virtual key's
    threshold-side prediction (token 1 iff unit < 1/2); ties decode to 0."""
    score0 = score1 = 0
    for tok, label in zip(tokens, labels):
        u0 = prf.unit(key.key, label, 0)
        u1 = prf.unit(key.key, label, 1)
        score0 += int(tok == (1 if u0 < 0.5 else 0))
        score1 += int(tok == (1 if u1 < 0.5 else 0))
    return (0 if score0 >= score1 else 1), (score0, score1)


# --- high-entropy rejection embedding -------------------------------------------

@dataclass(frozen=True)
class RejectionOutcome:
    sample: int | None
    tries: int
    aborted: bool


def embed_rejection(seed: ExtractorSeed, b: int, sampler,
                    rng: np.random.Generator, max_tries: int) -> RejectionOutcome:
    """Draw honest samples until the extractor labels one with b.

    Expected ~2 draws in the high-entropy regime; aborts (flagged) after
    ``max_tries`` so the caller can fall back to an honest sample.
    """
    for t in range(1, max_tries + 1):
        x = sampler(rng)
        if ext_bit(seed, x) == b:
            return RejectionOutcome(x, t, False)
    return RejectionOutcome(None, max_tries, True)


# --- watermark-based success verification ---------------------------------------

def pairwise_hash_seed(in_bits: int, out_bits: int,
                       pp_rng: np.random.Generator) -> tuple:
    """Public pairwise-independent hash h(k) = M k xor v over GF(2)."""
    m = pp_rng.integers(0, 2, size=(out_bits, in_bits), dtype=np.uint8)
    v = pp_rng.integers(0, 2, size=out_bits, dtype=np.uint8)
    return m, v


def pairwise_hash(seed: tuple, key_bits: BitVector) -> bytes:
    m, v = seed
    if m.shape[1] != len(key_bits):
        raise ValueError("hash input width mismatch")
    out = (m @ key_bits.bits + v) % 2
    return np.packbits(out.astype(np.uint8)).tobytes()


def wm_embed_round(wm_key: bytes, n_tokens: int, p1: float, labels,
                   prf: UnitPrf) -> list:
    return [threshold_sample_token(p1, prf.unit(wm_key, lab, 0))
            for lab in labels[:n_tokens]]


def wm_detect_round(wm_key: bytes, tokens, labels, prf: UnitPrf) -> tuple[bool, int]:
    matches = sum(int(t == (1 if prf.unit(wm_key, lab, 0) < 0.5 else 0))
                  for t, lab in zip(tokens, labels))
    return matches == len(tokens), matches


def wm_verify_amplify(key_a: BitVector, key_b: BitVector, hash_seed: tuple,
                      n_tokens: int, p1: float, base_label: int,
                      prf: UnitPrf) -> dict:
    """One verification round: Alice watermarks under h(k_A), Bob tests under
    h(k_B). Detection implies equal keys up to the hash output width; unequal
    keys hash to independent watermark keys, so detection drops to the
    honest false-positive rate (2^-n_tokens on fair tokens)."""
    labels = [PrfLabel(base_label, "A", j) for j in range(n_tokens)]
    tokens = wm_embed_round(pairwise_hash(hash_seed, key_a), n_tokens, p1,
                            labels, prf)
    confirmed, matches = wm_detect_round(pairwise_hash(hash_seed, key_b),
                                         tokens, labels, prf)
    return {"confirmed": confirmed, "matches": matches, "tokens": tokens}


# --- shared-key covert conversation ---------------------------------------------

@dataclass(frozen=True)
class CovertPayload:
    bits: BitVector
    codec: str = "binary-tokens-v1"

    @classmethod
    def from_tokens(cls, tokens) -> "CovertPayload":
        return cls(BitVector([1 if t in (1, "1") else 0 for t in tokens]))

    def to_tokens(self) -> list:
        return ["1" if b else "0" for b in self.bits]


@dataclass
class OverlayResult:
    transcript: Transcript
    code_bits_sent: int
    decoded_bits: list            # payload bits recovered from the transcript
    decoded_code_bits: int


def covert_conversation(model_a: MockModel, model_b: MockModel,
                        policy_a: ConversationPolicy, policy_b: ConversationPolicy,
                        rounds: int, payload: CovertPayload, key: SessionKey,
                        rng: np.random.Generator,
                        repetition: int = 5,
                        prf: UnitPrf | None = None,
                        key_registry: KeyRegistry | None = None) -> OverlayResult:
    """Run the honest protocol while carrying ``payload`` through keyed
    sampling; with an empty payload the run is bit-identical to the honest
    conversation under the same generator.

    One code bit rides on each carried position: binary support with an
    actual coin toss (0 < p1 < 1). Code bits 5i..5i+4 repeat payload bit i
    (majority at decode). Degenerate and non-binary positions are sampled
    honestly, so a deterministic fixture carries nothing and the scheme
    degrades gracefully.
    """
    prf = prf or UnitPrf()
    if key_registry is not None:
        key_registry.consume(key)
    registry = LabelRegistry()
    code_len = len(payload.bits) * repetition
    transcript = Transcript()
    state_a, state_b = policy_a.initial_state, policy_b.initial_state
    sent = 0
    for t in range(rounds):
        if t % 2 == 0:
            prompt, state_a = policy_a.prompt_selector(
                policy_a.private_context, state_a, transcript.rounds)
            model, speaker = model_a, "A"
        else:
            prompt, state_b = policy_b.prompt_selector(
                policy_b.private_context, state_b, transcript.rounds)
            model, speaker = model_b, "B"
        message = []
        logp = 0.0
        while True:
            dist = model.next_dist(prompt, tuple(message))
            carried = (sent < code_len and set(dist) <= {"0", "1"}
                       and 0.0 < dist.get("1", 0.0) < 1.0)
            if carried:
                code_bit = int(payload.bits[sent // repetition])
                label = PrfLabel(t, speaker, len(message))
                registry.consume(label)
                u = prf.unit(key.key, label, code_bit)
                tok = "1" if threshold_sample_token(dist.get("1", 0.0), u) else "0"
                sent += 1
            else:
                tok = draw_token(dist, rng)
            logp += math.log2(dist[tok])
            message.append(tok)
            if tok == model.terminator:
                break
        transcript.rounds.append(TranscriptRound(
            speaker, prompt, tuple(message), -logp,
            content_length(tuple(message), model.terminator) > 0))
    decoded, decoded_code = decode_covert_transcript(
        transcript, model_a, model_b, policy_a, policy_b, key, prf,
        repetition=repetition)
    return OverlayResult(transcript, sent, decoded, decoded_code)


def decode_covert_transcript(transcript: Transcript, model_a: MockModel,
                             model_b: MockModel, policy_a: ConversationPolicy,
                             policy_b: ConversationPolicy, key: SessionKey,
                             prf: UnitPrf, repetition: int = 5) -> tuple[list, int]:
    """Recover the covert payload prefix from the public transcript and key.

    Prompts are recomputed via the deterministic policies, carried positions
    are identified by the same nondegenerate-binary rule the embedder used,
    and each repetition span decodes by the match-count statistic (tie to 0).
    The returned prefix is clipped to the transcript's total empirical
    entropy: recovered covert bits never exceed the information-theoretic
    budget.
    """
    state_a, state_b = policy_a.initial_state, policy_b.initial_state
    span_scores: list = []
    code_count = 0
    replay: list = []
    for t, rnd in enumerate(transcript.rounds):
        if t % 2 == 0:
            prompt, state_a = policy_a.prompt_selector(
                policy_a.private_context, state_a, replay)
            model = model_a
        else:
            prompt, state_b = policy_b.prompt_selector(
                policy_b.private_context, state_b, replay)
            model = model_b
        for j, tok in enumerate(rnd.message):
            dist = model.next_dist(prompt, tuple(rnd.message[:j]))
            if not (set(dist) <= {"0", "1"} and 0.0 < dist.get("1", 0.0) < 1.0):
                continue
            label = PrfLabel(t, rnd.speaker, j)
            u0 = prf.unit(key.key, label, 0)
            u1 = prf.unit(key.key, label, 1)
            bit = 1 if tok == "1" else 0
            span = code_count // repetition
            while span >= len(span_scores):
                span_scores.append([0, 0])
            span_scores[span][0] += int(bit == (1 if u0 < 0.5 else 0))
            span_scores[span][1] += int(bit == (1 if u1 < 0.5 else 0))
            code_count += 1
        replay.append(rnd)
    full = code_count // repetition
    ceiling = int(transcript.total_entropy() + 1e-9)
    decoded = [0 if s0 >= s1 else 1 for s0, s1 in span_scores[:min(full, ceiling)]]
    return decoded, code_count


# --- keyless pipeline -----------------------------------------------------------

@dataclass
class CovertFixture:
    """Honest conversation whose talk rounds carry the covert key exchange."""
    model_a: MockModel
    model_b: MockModel
    prompt: object
    threshold: int               # eligibility length threshold K
    width: int
    law_a: ResponseLaw = field(init=False)
    law_b: ResponseLaw = field(init=False)

    def __post_init__(self):
        self.law_a = ResponseLaw(self.model_a, self.prompt, self.width)
        self.law_b = ResponseLaw(self.model_b, self.prompt, self.width)
        for law in (self.law_a, self.law_b):
            msg = law.messages[0]
            if content_length(msg, self.model_a.terminator) <= self.threshold:
                raise ValueError("talk responses must exceed the threshold")

    def law(self, speaker: str) -> ResponseLaw:
        return self.law_a if speaker == "A" else self.law_b


@dataclass(frozen=True)
class CompiledKe:
    """A pseudorandom-transcript key exchange compiled into a noise-tolerant
    form; its channel uses are bundle embeds with sender-side feedback."""
    backend: object
    p_design: float
    n_per_bit: int
    scheme: str = "optimal"


@dataclass(frozen=True)
class SparseParityKe:
    params: object               # LspnParams; its p must bound the bundle crossovers


def pp_stream(width: int, bundle_size: int, entropy_bound: float,
              pp_rng: np.random.Generator):
    """I.i.d. fresh public parameters for the bundle sampler."""
    while True:
        yield BundlePublicParams.fresh(width, bundle_size, entropy_bound, pp_rng)


@dataclass
class CovertKeResult:
    transcript: Transcript
    key_a: BitVector | None
    key_b: BitVector | None
    agreed: bool
    failure: str | None
    telemetry: dict


class _BundleChannel:
    """Sender-side channel built from bundle embeds on eligible rounds.

    ``uses`` records (speaker, pp, published canonical sample) so receivers
    decode from the public transcript rather than from sender state.
    """

    def __init__(self, fixture: CovertFixture, pps, rng, registry_keys: set):
        self.fixture = fixture
        self.pps = pps
        self.rng = rng
        self.registry = registry_keys
        self.tables = {
            "A": AtomPatternTable(fixture.law_a.encodings, fixture.width),
            "B": AtomPatternTable(fixture.law_b.encodings, fixture.width),
        }
        self.crossovers: list = []
        self.uses: list = []

    def send(self, speaker: str, bit: int, p_of_bundle_cb) -> tuple:
        """Draw a bundle, report its exact crossover to the strategy callback
        (which returns the channel-input bit), embed, and return
        (published atom, its entropy, the sender-side feedback bit)."""
        law = self.fixture.law(speaker)
        pp = next(self.pps)
        key = pp.key()
        if key in self.registry:
            raise ValueError("bundle params reused within the conversation")
        self.registry.add(key)
        L = pp.bundle_size
        idx = law.draw_indices(self.rng, L)
        counts = np.bincount(idx, minlength=len(law))
        p_t = self.tables[speaker].exact_p(counts)
        x_bit = p_of_bundle_cb(p_t) if bit is None else bit
        out = embed_on_candidates(pp, x_bit, law.encodings[idx], self.rng)
        atom = int(idx[out.published_index])
        y_bit = x_bit if out.decode_correct else x_bit ^ 1
        self.crossovers.append(p_t)
        self.uses.append((speaker, pp, out.published))
        return atom, float(law.entropies[atom]), y_bit, x_bit

    def decode_uses(self, speaker: str) -> list:
        """Receiver view: decode the speaker's uses from public data only."""
        return [decode(pp, canonical) for spk, pp, canonical in self.uses
                if spk == speaker]


def run_covert_ke(fixture: CovertFixture, noisy_ke, pps, rng: np.random.Generator,
                  rounds_budget: int | None = None) -> CovertKeResult:
    """Carry the noise-tolerant key exchange through the honest conversation, one bundle embed per
    eligible round of the correct speaker, honest sampling elsewhere.

    Returns the public transcript, both derived keys, and the verdict.
    Insufficient eligible rounds yield an explicit failure with the budget in
    the telemetry.
    """
    if isinstance(noisy_ke, CompiledKe):
        return _run_compiled(fixture, noisy_ke, pps, rng, rounds_budget)
    if isinstance(noisy_ke, SparseParityKe):
        return _run_lspn(fixture, noisy_ke, pps, rng, rounds_budget)
    raise TypeError(f"unsupported carrier {type(noisy_ke).__name__}")


def _log_ratio(q_plus, q_minus, y):
    if y == 1:
        return math.log(q_plus) - math.log(q_minus)
    return math.log(1.0 - q_plus) - math.log(1.0 - q_minus)


def _run_compiled(fixture, ke: CompiledKe, pps, rng, rounds_budget):
    if ke.scheme != "optimal":
        raise ValueError("the keyless pipeline compiles via the optimal scheme")
    backend = ke.backend
    p_design, n_per_bit = ke.p_design, ke.n_per_bit
    m_a, m_b, secrets_a, secrets_b = backend.messages(rng)
    bits = {"A": m_a.bits, "B": m_b.bits}
    needed = 2 * backend.msg_bits * n_per_bit
    if rounds_budget is not None and needed > rounds_budget:
        return CovertKeResult(Transcript(), None, None, False,
                              "insufficient eligible rounds",
                              {"needed": needed, "budget": rounds_budget})
    channel = _BundleChannel(fixture, pps, rng, set())
    transcript = Transcript(eligibility_threshold=fixture.threshold)
    # sender state per speaker: current bit index, uses done, posterior log-odds
    state = {s: {"bit": 0, "use": 0, "logodds": 0.0} for s in ("A", "B")}
    received: dict = {"A": [], "B": []}          # y bits of each sender's blocks
    clamped = 0
    for t in range(needed):
        speaker = "A" if t % 2 == 0 else "B"
        st = state[speaker]
        o_bit = int(bits[speaker][st["bit"]])
        w = 1.0 / (1.0 + math.exp(-st["logodds"]))
        q_plus, q_minus = optimal_next_biases(w, p_design)
        target = q_plus if o_bit else q_minus

        def choose(p_t, target=target):
            nonlocal clamped
            if not p_t - 1e-12 <= target <= 1.0 - p_t + 1e-12:
                clamped += 1
            a = realize_bias_clamped(target, p_t)
            return 1 if rng.random() < a else 0

        atom, entropy, y_bit, _ = channel.send(speaker, None, choose)
        law = fixture.law(speaker)
        transcript.rounds.append(TranscriptRound(
            speaker, fixture.prompt, law.messages[atom], entropy, True))
        received[speaker].append(y_bit)
        st["logodds"] += _log_ratio(q_plus, q_minus, 1 if y_bit else -1)
        st["use"] += 1
        if st["use"] == n_per_bit:
            st["use"] = 0
            st["bit"] += 1
            st["logodds"] = 0.0
    # receiver side: decode each use from the public transcript and replay
    # the posterior under the shared rule; the sender's feedback view must
    # coincide with the transcript decode exactly
    decoded = {}
    for speaker in ("A", "B"):
        ys = channel.decode_uses(speaker)
        assert ys == received[speaker], "feedback diverged from transcript decode"
        out = []
        for b0 in range(backend.msg_bits):
            logodds = 0.0
            for y in ys[b0 * n_per_bit:(b0 + 1) * n_per_bit]:
                w = 1.0 / (1.0 + math.exp(-logodds))
                q_plus, q_minus = optimal_next_biases(w, p_design)
                logodds += _log_ratio(q_plus, q_minus, 1 if y else -1)
            out.append(1 if logodds >= 0.0 else 0)
        decoded[speaker] = np.array(out, dtype=np.uint8)
    key_a = backend.derive(secrets_a, decoded["B"], "A")
    key_b = backend.derive(secrets_b, decoded["A"], "B")
    return CovertKeResult(
        transcript, key_a, key_b, key_a == key_b, None,
        {"channel_uses": needed, "clamped_steps": clamped,
         "crossovers": np.array(channel.crossovers),
         "sent": {"A": m_a, "B": m_b}, "decoded": decoded})


def _run_lspn(fixture, ke: SparseParityKe, pps, rng, rounds_budget):
    from . import lspn as _lspn

    params = ke.params
    c_bits = _lspn.generate_matrix(params.n, np.random.default_rng(
        int(rng.integers(0, 2 ** 63 - 1))))
    channel = _BundleChannel(fixture, pps, rng, set())
    transcript = Transcript(eligibility_threshold=fixture.threshold)
    rounds_data = [_lspn.round_messages(c_bits, params, rng)
                   for _ in range(params.ell)]
    stream_a = np.concatenate([r["alice_sketch"].bits for r in rounds_data])
    stream_b = np.concatenate([r["bob_sketch"].bits for r in rounds_data])
    needed = 2 * stream_a.size + 2 * params.ell
    if rounds_budget is not None and needed > rounds_budget:
        return CovertKeResult(Transcript(), None, None, False,
                              "insufficient eligible rounds",
                              {"needed": needed, "budget": rounds_budget})

    def carry_one(round_index, speaker, bit):
        atom, entropy, y, _ = channel.send(speaker, int(bit), None)
        law = fixture.law(speaker)
        transcript.rounds.append(TranscriptRound(
            speaker, fixture.prompt, law.messages[atom], entropy, True))
        return y

    def honest_one(round_index, speaker):
        law = fixture.law(speaker)
        atom = law.draw_index(rng)
        transcript.rounds.append(TranscriptRound(
            speaker, fixture.prompt, law.messages[atom],
            float(law.entropies[atom]), True))

    # phase 1: sketch bits interleaved so speakers strictly alternate
    feedback_a = np.empty(stream_a.size, dtype=np.uint8)
    feedback_b = np.empty(stream_b.size, dtype=np.uint8)
    t = 0
    for i in range(stream_a.size):
        feedback_a[i] = carry_one(t, "A", stream_a[i])
        feedback_b[i] = carry_one(t + 1, "B", stream_b[i])
        t += 2
    # phase 2: Alice carries the final string; Bob's rounds are honest.
    # the per-iteration bits only feed the final message, so Alice derives
    # them from Bob's sketches as decoded off the public transcript
    recv_b = np.array(channel.decode_uses("B"), dtype=np.uint8)
    assert np.array_equal(recv_b, feedback_b)
    n = params.n
    k_a = np.empty(params.ell, dtype=np.uint8)
    for i, rd in enumerate(rounds_data):
        k_a[i], _ = _lspn.derive_bits(rd, BitVector(np.zeros(n, np.uint8)),
                                      BitVector(recv_b[i * n:(i + 1) * n]))
    kappa_a = int(rng.integers(0, 2))
    t_bits = _lspn.final_message(BitVector(k_a), kappa_a, params.eta, rng)
    for i in range(params.ell):
        carry_one(t, "A", t_bits.bits[i])
        honest_one(t + 1, "B")
        t += 2
    # Bob's side, all from the public transcript: sketches then final string
    a_uses = np.array(channel.decode_uses("A"), dtype=np.uint8)
    recv_a = a_uses[:stream_a.size]
    t_recv = a_uses[stream_a.size:]
    assert np.array_equal(recv_a, feedback_a)
    k_b = np.empty(params.ell, dtype=np.uint8)
    for i, rd in enumerate(rounds_data):
        _, k_b[i] = _lspn.derive_bits(rd, BitVector(recv_a[i * n:(i + 1) * n]),
                                      BitVector(np.zeros(n, np.uint8)))
    kappa_b = _lspn.final_decision(BitVector(t_recv), BitVector(k_b),
                                   params.security)
    return CovertKeResult(
        transcript, BitVector([kappa_a]), BitVector([kappa_b]),
        kappa_a == kappa_b, None,
        {"channel_uses": needed, "crossovers": np.array(channel.crossovers)})
