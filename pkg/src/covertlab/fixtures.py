"""Fixture library: the model regimes the experiments distinguish, plus the
declarative on-disk model format.

Three regimes ship, mirroring what the stack's guarantees depend on:
constant min-entropy c per eligible round, high-entropy rounds, and
deterministic rounds interleaved with either.

File format: JSON with the token alphabet, terminator, length bound, and
prompt-indexed distribution tables. Probabilities are decimal strings to
avoid parse drift; prefixes are space-joined token strings.
"""

from __future__ import annotations

import json
from decimal import Decimal

from .mockmodel import ConversationPolicy, MockModel

TERM = "$"


def _pad_tail(table: dict, prefix: tuple, pad_token: str, upto: int):
    """Deterministic pad_token run from len(prefix) to upto, then terminator."""
    p = prefix
    while len(p) < upto:
        table[p] = {pad_token: 1.0}
        p = p + (pad_token,)
    table[p] = {TERM: 1.0}


def coin_model(c: int, content_len: int, extra_prompts: bool = True) -> MockModel:
    """Constant min-entropy fixture: 2^c equiprobable responses.

    The first ``c`` tokens are fair coins, the rest a deterministic zero pad
    to ``content_len`` content tokens. Response min-entropy is exactly c bits.
    With ``extra_prompts`` the model also carries a short deterministic
    "ack" prompt (content length 2) for interleaving ineligible rounds.
    """
    if c > content_len:
        raise ValueError("c cannot exceed content_len")
    table = {}
    # enumerate coin prefixes breadth-first
    frontier = [()]
    for _ in range(c):
        nxt = []
        for p in frontier:
            table[p] = {"0": 0.5, "1": 0.5}
            nxt.extend([p + ("0",), p + ("1",)])
        frontier = nxt
    for p in frontier:
        _pad_tail(table, p, "0", content_len)
    rule = {"talk": table}
    if extra_prompts:
        ack = {}
        _pad_tail(ack, (), "0", 2)
        rule["ack"] = ack
    return MockModel(("0", "1", TERM), TERM, rule, content_len + 1)


def biased_pair_model(p_heavy: str = "0.75") -> MockModel:
    """Two-atom fixture with a non-dyadic split; used for exact-TV tests
    where float rounding has to be visible rather than exactly zero."""
    ph = float(Decimal(p_heavy))
    table = {
        (): {"0": ph, "1": 1.0 - ph},
        ("0",): {TERM: 1.0},
        ("1",): {TERM: 1.0},
    }
    return MockModel(("0", "1", TERM), TERM, {"talk": table}, 2)


def flat_model(n_tokens: int) -> MockModel:
    """High-entropy fixture: n_tokens fair coins then the terminator.

    The response law is uniform on 2^n_tokens strings; min-entropy n_tokens
    bits. The table is functional because the tree is exponential.
    """
    def rule(prompt, prefix):
        if prompt != "essay":
            raise ValueError(f"unknown prompt id {prompt!r}")
        if len(prefix) < n_tokens:
            return {"0": 0.5, "1": 0.5}
        return {TERM: 1.0}

    return MockModel(("0", "1", TERM), TERM, rule, n_tokens + 1)


def deterministic_model(content: str = "0000") -> MockModel:
    """Single forced response; zero entropy everywhere."""
    table = {}
    toks = tuple(content)
    for i in range(len(toks)):
        table[toks[:i]] = {toks[i]: 1.0}
    table[toks] = {TERM: 1.0}
    return MockModel(("0", "1", TERM), TERM, {"talk": table}, len(toks) + 1)


def markov_fixture():
    """Tiny transcript-law fixture: two prompts whose selection depends on the
    previous response, <= 2 responses per round. Small enough that the exact
    conversation law is enumerable by brute force.
    """
    table_x = {
        (): {"a": 0.75, "b": 0.25},
        ("a",): {TERM: 1.0},
        ("b",): {TERM: 1.0},
    }
    table_y = {
        (): {"a": 0.5, "b": 0.5},
        ("a",): {TERM: 1.0},
        ("b",): {TERM: 1.0},
    }
    model = MockModel(("a", "b", TERM), TERM, {"x": table_x, "y": table_y}, 2)

    def selector(context, state, rounds):
        if not rounds:
            return "x", None
        return ("x" if rounds[-1].message[0] == "a" else "y"), None

    policy = ConversationPolicy("", selector)
    return model, policy


def constant_policy(prompt) -> ConversationPolicy:
    return ConversationPolicy("", lambda ctx, st, rounds: (prompt, st))


def alternating_policy(prompts) -> ConversationPolicy:
    """Cycle through ``prompts`` on the party's own rounds."""
    prompts = tuple(prompts)

    def selector(context, state, rounds):
        i = state or 0
        return prompts[i % len(prompts)], i + 1

    return ConversationPolicy("", selector, initial_state=0)


# --- declarative file format --------------------------------------------------

SCHEMA_VERSION = 1


def save_model(model: MockModel, path: str):
    if not isinstance(model.rule, dict):
        raise TypeError("only table models are serializable")
    prompts = {}
    for prompt, table in model.rule.items():
        entries = {}
        for prefix, dist in sorted(table.items()):
            key = " ".join(prefix)
            entries[key] = {tok: format(Decimal(repr(p)), "f")
                            for tok, p in sorted(dist.items())}
        prompts[str(prompt)] = entries
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tokens": list(model.alphabet),
        "terminator": model.terminator,
        "max_response_len": model.max_response_len,
        "prompts": prompts,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> MockModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')}")
    rule = {}
    for prompt, entries in doc["prompts"].items():
        table = {}
        for key, dist in entries.items():
            prefix = tuple(key.split(" ")) if key else ()
            table[prefix] = {tok: float(Decimal(p)) for tok, p in dist.items()}
        rule[prompt] = table
    return MockModel(tuple(doc["tokens"]), doc["terminator"], rule,
                     doc["max_response_len"])


BUILTIN_FIXTURES = {
    "coin-c1": lambda: coin_model(1, 5),
    "coin-c2": lambda: coin_model(2, 5),
    "coin-c3": lambda: coin_model(3, 5),
    "biased-pair": biased_pair_model,
    "deterministic": deterministic_model,
    "flat-6": lambda: flat_model(6),
}
