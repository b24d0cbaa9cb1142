"""Random-looking signaling over a BSC with noiseless feedback.

Two sender strategies keep the received transcript exactly uniform while
signaling one hidden objective bit: a soft-majority scheme driven by a Doob
table of continuation values, with error Theta(1/sqrt(n)), and a
posterior-matching scheme that pins the less likely hypothesis at the noise
floor and decodes by MAP, with error at most (1/2) * lambda(p)^n for
lambda(p) = (sqrt(p) + sqrt(1-p)) / sqrt(2).

beta uses the natural logarithm: the choice sigma(2*beta) = 1 - p forces it,
despite the bit-entropy convention elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _expit
from scipy.stats import binom as _binom

from .primitives import ChannelSpec

H_TABLE_CAP = 10_000


def sigma(u):
    return _expit(np.asarray(u, dtype=float))


def beta_for_p(p: float) -> float:
    """beta = (1/2) ln((1-p)/p), so that sigma(2 beta) = 1 - p."""
    if not 0.0 < p < 0.5:
        raise ValueError(f"p must be in (0, 1/2), got {p}")
    return 0.5 * math.log((1.0 - p) / p)


def bhattacharyya_rate(p: float) -> float:
    """lambda(p) = (sqrt(p) + sqrt(1-p)) / sqrt(2), the per-step contraction."""
    if not 0.0 < p < 0.5:
        raise ValueError(f"p must be in (0, 1/2), got {p}")
    return (math.sqrt(p) + math.sqrt(1.0 - p)) / math.sqrt(2.0)


# --- majority signaling -------------------------------------------------------

class HTable:
    """Continuation values H[r, s] = E[w(s + W_r)] with w(s) = 2 sigma(beta s).

    Row r covers integer offsets |s| <= n - r; the whole triangle is O(n^2)
    and rows are immutable after build, so one table can be shared across
    parallel runs.
    """

    def __init__(self, n: int, beta: float, rows: list):
        self.n = n
        self.beta = beta
        self._rows = rows

    def value(self, r: int, s: int) -> float:
        row = self._rows[r]
        span = self.n - r
        if abs(s) > span:
            raise ValueError(f"|s|={abs(s)} out of range at r={r} (span {span})")
        return float(row[s + span])

    def row(self, r: int) -> np.ndarray:
        return self._rows[r]


def build_h_table(n: int, beta: float) -> HTable:
    """Build the full table via H[0,s] = 2 sigma(beta s) and pairwise averaging."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > H_TABLE_CAP:
        raise ValueError(f"n={n} exceeds the per-block cap {H_TABLE_CAP}")
    s = np.arange(-n, n + 1, dtype=float)
    rows = [2.0 * sigma(beta * s)]
    for _ in range(n):
        prev = rows[-1]
        rows.append(0.5 * (prev[2:] + prev[:-2]))
    for row in rows:
        row.setflags(write=False)
    return HTable(n, beta, rows)


def next_bias_majority(table: HTable, r: int, s: int) -> float:
    """Target law of the next aligned received bit given r steps remain."""
    if r < 1:
        raise ValueError("r must be >= 1")
    hp = table.value(r - 1, s + 1)
    hm = table.value(r - 1, s - 1)
    return hp / (hp + hm)


def realize_bias(q: float, p_t: float) -> float:
    """Sender-bit probability a_t = (q - p_t) / (1 - 2 p_t).

    Feasible only for q in [p_t, 1 - p_t]; infeasible targets are rejected.
    """
    if not 0.0 <= p_t < 0.5:
        raise ValueError(f"crossover {p_t} outside [0, 1/2)")
    if q < p_t - 1e-12 or q > 1.0 - p_t + 1e-12:
        raise ValueError(f"target bias {q} infeasible at crossover {p_t}")
    return min(1.0, max(0.0, (q - p_t) / (1.0 - 2.0 * p_t)))


def realize_bias_clamped(q: float, p_t: float) -> float:
    """Clamped variant for sender-internal channels whose realized crossover
    may exceed the design bound; transcript exactness is unaffected (the mask
    bit carries it), only that step's received-bit fairness degrades. At
    p_t = 1/2 the channel is pure noise and any sender bit realizes q = 1/2."""
    denom = 1.0 - 2.0 * p_t
    if denom <= 1e-15:
        return 0.5
    return min(1.0, max(0.0, (q - p_t) / denom))


@dataclass(frozen=True)
class SignalingRun:
    objective: int                    # +-1
    received: np.ndarray              # +-1 per channel use
    decoded: int
    channel: ChannelSpec
    scheme: str
    trajectory: tuple = ()


def run_majority_signaling(objective: int, n: int, channel: ChannelSpec,
                           rng: np.random.Generator,
                           table: HTable | None = None) -> SignalingRun:
    """One majority-signaling block; decodes by the sign of the received sum."""
    if n % 2 == 0:
        raise ValueError("majority signaling requires odd n")
    if len(channel) < n:
        raise ValueError("channel schedules fewer uses than n")
    if objective not in (-1, 1):
        raise ValueError("objective must be +-1")
    if table is None:
        table = build_h_table(n, beta_for_p(channel.bound))
    s = 0
    received = np.empty(n, dtype=np.int64)
    for t in range(n):
        q = next_bias_majority(table, n - t, s)
        p_t = channel.crossover_probs[t]
        a = realize_bias(q, p_t)
        v = 1 if rng.random() < a else -1          # aligned sent bit
        u = v if rng.random() >= p_t else -v       # aligned received bit
        s += u
        received[t] = objective * u
    decoded = 1 if received.sum() > 0 else -1
    return SignalingRun(objective, received, decoded, channel, "majority")


def majority_error_batch(n: int, p: float, trials: int,
                         rng: np.random.Generator,
                         table: HTable | None = None) -> int:
    """Vectorized error count of the majority scheme over i.i.d. blocks.

    All trials share the horizon, so the step loop gathers each trial's
    current row entry; the per-trial law matches run_majority_signaling.
    """
    if n % 2 == 0:
        raise ValueError("majority signaling requires odd n")
    if table is None:
        table = build_h_table(n, beta_for_p(p))
    s = np.zeros(trials, dtype=np.int64)
    for t in range(n):
        row = table.row(n - t - 1)
        span = table.n - (n - t - 1)
        hp = row[s + 1 + span]
        hm = row[s - 1 + span]
        q = hp / (hp + hm)
        a = (q - p) / (1.0 - 2.0 * p)
        v = np.where(rng.random(trials) < a, 1, -1)
        flip = rng.random(trials) < p
        u = np.where(flip, -v, v)
        s += u
    # aligned sum <= 0 decodes wrongly; n odd so no ties
    return int((s < 0).sum())


def exact_majority_error(n: int, beta: float) -> float:
    """Closed form E[sigma(-beta |W_n|)] over the uniform endpoint law.

    This is the exact failure probability of the majority scheme for any
    admissible crossover schedule, because the sequential sampler realizes
    the target law exactly.
    """
    s = np.arange(-n, n + 1, 2)
    pmf = _binom.pmf((s + n) // 2, n, 0.5)
    with np.errstate(over="ignore"):
        vals = 1.0 / (1.0 + np.exp(beta * np.abs(s)))
    return float(np.sum(pmf * vals))


def majority_n_for(p: float, per_bit_error: float, n_max: int = H_TABLE_CAP) -> int:
    """Smallest odd n whose exact majority error is at most per_bit_error."""
    beta = beta_for_p(p)
    lo, hi = 1, 3
    while exact_majority_error(hi, beta) > per_bit_error:
        hi *= 4
        hi += 1 - hi % 2
        if hi > n_max:
            raise ValueError(f"no odd n <= {n_max} reaches error {per_bit_error}")
    while lo + 2 < hi:
        mid = (lo + hi) // 2
        mid += 1 - mid % 2
        if exact_majority_error(mid, beta) <= per_bit_error:
            hi = mid
        else:
            lo = mid
    return hi if exact_majority_error(lo, beta) > per_bit_error else lo


# --- optimal (posterior matching) signaling ------------------------------------

def optimal_next_biases(w: float, p: float) -> tuple[float, float]:
    """Pin the less likely hypothesis at p; keep the unconditional bit fair.

    Returns (q_plus, q_minus) with w*q_plus + (1-w)*q_minus = 1/2 exactly.
    """
    if not 0.0 < p < 0.5:
        raise ValueError(f"p must be in (0, 1/2), got {p}")
    if w >= 0.5:
        q_minus = p
        q_plus = (0.5 - (1.0 - w) * p) / w
    else:
        q_plus = p
        q_minus = (0.5 - w * p) / (1.0 - w)
    return q_plus, q_minus


def posterior_update(w: float, q_plus: float, y: int) -> float:
    """Bayes update of Pr[o = +1] after observing y, using the fairness of the
    unconditional next bit (denominator 1/2)."""
    return 2.0 * w * q_plus if y == 1 else 2.0 * w * (1.0 - q_plus)


class PosteriorState:
    """Receiver posterior tracked in log-odds.

    The update algebra is exact in log-odds: 1 - w' = 2 (1-w) q_minus when
    y = +1 (and symmetrically), so each step adds ln(q+/q-) or
    ln((1-q+)/(1-q-)). Double-precision w would underflow near certainty.
    """

    def __init__(self):
        self.log_odds = 0.0
        self.step = 0
        self.trajectory = []

    @property
    def w(self) -> float:
        return float(sigma(self.log_odds))

    def update(self, q_plus: float, q_minus: float, y: int):
        if y == 1:
            self.log_odds += math.log(q_plus / q_minus)
        else:
            self.log_odds += math.log((1.0 - q_plus) / (1.0 - q_minus))
        self.step += 1
        self.trajectory.append((self.w, q_plus, q_minus, y))


def run_optimal_signaling(objective: int, n: int, channel: ChannelSpec,
                          rng: np.random.Generator) -> SignalingRun:
    """One posterior-matching block; decodes +1 iff the final posterior >= 1/2
    (ties to +1, a measure-zero convention)."""
    if objective not in (-1, 1):
        raise ValueError("objective must be +-1")
    if len(channel) < n:
        raise ValueError("channel schedules fewer uses than n")
    p = channel.bound
    state = PosteriorState()
    received = np.empty(n, dtype=np.int64)
    for t in range(n):
        q_plus, q_minus = optimal_next_biases(state.w, p)
        target = q_plus if objective == 1 else q_minus
        a = realize_bias(target, channel.crossover_probs[t])
        x = 1 if rng.random() < a else -1
        y = x if rng.random() >= channel.crossover_probs[t] else -x
        received[t] = y
        state.update(q_plus, q_minus, int(y))
    decoded = 1 if state.log_odds >= 0.0 else -1
    return SignalingRun(objective, received, decoded, channel, "optimal",
                        tuple(state.trajectory))


def optimal_error_batch(n: int, p: float, trials: int,
                        rng: np.random.Generator) -> int:
    """Vectorized error count of the optimal scheme (objective fixed +1 wlog;
    the scheme is symmetric under o -> -o with q+ and q- exchanged)."""
    log_odds = np.zeros(trials)
    for _ in range(n):
        w = 1.0 / (1.0 + np.exp(-log_odds))
        hi = w >= 0.5
        q_plus = np.where(hi, (0.5 - (1.0 - w) * p) / np.maximum(w, 1e-300), p)
        q_minus = np.where(hi, p, (0.5 - w * p) / np.maximum(1.0 - w, 1e-300))
        a = (q_plus - p) / (1.0 - 2.0 * p)      # objective = +1
        x = np.where(rng.random(trials) < a, 1, -1)
        y = np.where(rng.random(trials) < p, -x, x)
        step = np.where(y == 1, np.log(q_plus / q_minus),
                        np.log((1.0 - q_plus) / (1.0 - q_minus)))
        log_odds += step
    return int((log_odds < 0.0).sum())


# --- compiling a PR-KE through signaling blocks ---------------------------------

def n_per_bit_for(p: float, transcript_bits: int, eta: float) -> int:
    """Smallest n with (1/2) lambda(p)^n <= eta / T: the per-bit budget that
    makes the compiled failure at most eta by a union bound."""
    lam = bhattacharyya_rate(p)
    target = eta / transcript_bits
    n = max(1, int(math.ceil(math.log(2.0 * target) / math.log(lam))))
    while 0.5 * lam ** n > target:
        n += 1
    return n


def compiled_budget(p: float, transcript_bits: int, eta: float) -> tuple[int, int]:
    """(n_per_bit, total channel uses) for the optimal-scheme compiler."""
    n = n_per_bit_for(p, transcript_bits, eta)
    return n, n * transcript_bits


def signal_bit(bit: int, n: int, channel: ChannelSpec, rng: np.random.Generator,
               scheme: str, table: HTable | None = None) -> tuple[int, SignalingRun]:
    o = 1 if bit else -1
    if scheme == "majority":
        run = run_majority_signaling(o, n, channel, rng, table=table)
    elif scheme == "optimal":
        run = run_optimal_signaling(o, n, channel, rng)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return (1 if run.decoded == 1 else 0), run


def compile_prke(backend, scheme: str, n_per_bit: int, channel_factory,
                 rng: np.random.Generator):
    """Replace each noiseless PR-KE transcript bit by one signaling block.

    ``channel_factory(block_index) -> ChannelSpec`` supplies each block's
    crossover schedule; schedules must respect the design bound, so an
    infeasible bias inside a block is impossible by construction (asserted).
    Returns a KeSession with the compiled verdict and telemetry.
    """
    from .prke import KeSession

    msg_a, msg_b, secrets_a, secrets_b = backend.messages(rng)
    table = None
    if scheme == "majority":
        if n_per_bit % 2 == 0:
            raise ValueError("majority scheme needs odd n_per_bit")
    block = 0
    total_uses = 0
    p_bound = channel_factory(0).bound
    if scheme == "majority":
        table = build_h_table(n_per_bit, beta_for_p(p_bound))

    def send(bits):
        nonlocal block, total_uses
        out = []
        runs = []
        for b in bits:
            channel = channel_factory(block)
            assert channel.bound <= p_bound + 1e-15
            decoded, run = signal_bit(int(b), n_per_bit, channel, rng, scheme,
                                      table=table)
            out.append(decoded)
            runs.append(run)
            block += 1
            total_uses += n_per_bit
        return out, runs

    recv_a, runs_a = send(msg_a.bits)      # Alice's message as Bob receives it
    recv_b, runs_b = send(msg_b.bits)
    key_a = backend.derive(secrets_a, np.array(recv_b, dtype=np.uint8), "A")
    key_b = backend.derive(secrets_b, np.array(recv_a, dtype=np.uint8), "B")
    return KeSession(
        secrets_a=secrets_a, secrets_b=secrets_b,
        key_a=key_a, key_b=key_b, agreed=key_a == key_b,
        transcript={"sent_a": msg_a, "sent_b": msg_b,
                    "received_a": recv_a, "received_b": recv_b,
                    "runs": (runs_a, runs_b)},
        channel_uses=total_uses)


def compiled_agreement_batch(transcript_bits: int, n_per_bit: int, p: float,
                             sessions: int, rng: np.random.Generator,
                             scheme: str = "optimal") -> int:
    """Number of sessions (out of ``sessions``) whose entire compiled ideal
    PR-KE transcript decodes correctly; vectorized across sessions.

    For the ideal backend the keys agree iff every transcript bit survives,
    so this counts exactly the compiled key-agreement events.
    """
    ok = np.ones(sessions, dtype=bool)
    table = None
    if scheme == "majority":
        table = build_h_table(n_per_bit, beta_for_p(p))
    for _ in range(transcript_bits):
        if scheme == "optimal":
            errors = _optimal_block_errors(n_per_bit, p, sessions, rng)
        else:
            errors = _majority_block_errors(n_per_bit, p, sessions, rng, table)
        ok &= ~errors
    return int(ok.sum())


def _optimal_block_errors(n, p, sessions, rng):
    log_odds = np.zeros(sessions)
    o = np.where(rng.random(sessions) < 0.5, 1, -1)
    for _ in range(n):
        w = 1.0 / (1.0 + np.exp(-log_odds))
        hi = w >= 0.5
        q_plus = np.where(hi, (0.5 - (1.0 - w) * p) / np.maximum(w, 1e-300), p)
        q_minus = np.where(hi, p, (0.5 - w * p) / np.maximum(1.0 - w, 1e-300))
        target = np.where(o == 1, q_plus, q_minus)
        a = (target - p) / (1.0 - 2.0 * p)
        x = np.where(rng.random(sessions) < a, 1, -1)
        y = np.where(rng.random(sessions) < p, -x, x)
        step = np.where(y == 1, np.log(q_plus / q_minus),
                        np.log((1.0 - q_plus) / (1.0 - q_minus)))
        log_odds += step
    decoded = np.where(log_odds >= 0.0, 1, -1)
    return decoded != o


def _majority_block_errors(n, p, sessions, rng, table):
    s = np.zeros(sessions, dtype=np.int64)
    for t in range(n):
        row = table.row(n - t - 1)
        span = table.n - (n - t - 1)
        hp = row[s + 1 + span]
        hm = row[s - 1 + span]
        q = hp / (hp + hm)
        a = (q - p) / (1.0 - 2.0 * p)
        v = np.where(rng.random(sessions) < a, 1, -1)
        u = np.where(rng.random(sessions) < p, -v, v)
        s += u
    return s < 0
