"""Attack strategies, man-in-the-middle orchestration and Monte Carlo reports.

Type-I strategies are mediators on the noiseless channel: they see every
noiseless value and every channel input/output pair but can only rewrite the
noiseless values.  Type-II (impersonation) runs an honest Alice on a value of
Oscar's choosing and swaps the final ``W1`` transmission for a ``W2`` input.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import round_lower_bound, round_lower_bound_raw, success_lower_bound  # noqa: F401
from .channel import DMC, as_distribution, entropy, hull_distance, imitation_map, sample
from .codes import wilson_interval
from .errors import DomainError
from .noninteractive import NiScheme, ni_verify_batch
from .setauth import Accept, Alice, Bob, DmcInput, DmcOutput, Noiseless, ProtocolInstance, RejectMark, run_session

# -- mediators -------------------------------------------------------------------


class _Mediator:
    """Base mediator: records what it saw, delivers values unchanged."""

    def __init__(self, instance: ProtocolInstance, rng: np.random.Generator):
        self.instance = instance
        self.rng = rng
        self.seen: dict[int, int] = {}
        self.delivered: dict[int, int] = {}
        self.dmc: list[tuple[np.ndarray, np.ndarray]] = []

    def rewrite(self, level: int, sender: str, value: int) -> int:
        return value

    def deliver(self, level: int, sender: str, value: int) -> int:
        self.seen[level] = int(value)
        out = int(self.rewrite(level, sender, int(value)))
        self.delivered[level] = out
        return out

    def observe_dmc(self, x, z) -> None:
        self.dmc.append((np.array(x), np.array(z)))

    def space(self, level: int) -> int:
        """Size of the value space of flow ``level``."""
        if self.instance.phi == 0:
            return self.instance.v1
        return self.instance.schedule.v(level)


def _other_value(size: int, value: int, rng) -> int:
    if size < 2:
        return value
    other = int(rng.integers(size - 1))
    return other if other < value else other + 1


@dataclass(frozen=True)
class PassThrough:
    name = "pass_through"

    def params(self) -> str:
        return ""

    def mediator(self, instance, rng):
        return _Mediator(instance, rng)


class _SubstituteFirst(_Mediator):
    def __init__(self, instance, rng, target):
        super().__init__(instance, rng)
        self.target = target

    def rewrite(self, level, sender, value):
        if level != 1:
            return value
        if self.target is not None and self.target != value:
            return self.target
        return _other_value(self.space(1), value, self.rng)


@dataclass(frozen=True)
class SubstituteFirstFlow:
    """Replace ``s_1`` by ``target`` (or a uniformly random other value); then relay."""

    target: int | None = None
    name = "substitute_first"

    def params(self) -> str:
        return "" if self.target is None else f"target={self.target}"

    def mediator(self, instance, rng):
        return _SubstituteFirst(instance, rng, self.target)


class _RandomTamper(_Mediator):
    def __init__(self, instance, rng, prob):
        super().__init__(instance, rng)
        self.prob = prob

    def rewrite(self, level, sender, value):
        if self.rng.random() < self.prob:
            return int(self.rng.integers(self.space(level)))
        return value


@dataclass(frozen=True)
class RandomTamper:
    """Each noiseless value is replaced by a uniform one with probability ``prob``."""

    prob: float = 0.5
    name = "random_tamper"

    def __post_init__(self):
        if not 0 <= self.prob <= 1:
            raise DomainError("prob must lie in [0, 1]")

    def params(self) -> str:
        return f"prob={self.prob!r}"

    def mediator(self, instance, rng):
        return _RandomTamper(instance, rng, self.prob)


def best_partner(S, s: int) -> int | None:
    """Element sharing the most blocks with ``s`` in an explicit system."""
    blocks = S.blocks_containing(s)
    if blocks.size == 0:
        return None
    counts = np.zeros(S.v, dtype=np.int64)
    for i in blocks.tolist():
        counts[S.blocks[i]] += 1
    counts[s] = -1
    return int(np.argmax(counts))


class _Greedy(_Mediator):
    def __init__(self, instance, rng, j):
        super().__init__(instance, rng)
        self.j = j

    def rewrite(self, level, sender, value):
        inst = self.instance
        if level == 1:
            if inst.phi >= 2 and getattr(inst.system(1), "materialized", False):
                partner = best_partner(inst.system(1), value)
                if partner is not None:
                    return partner
            return _other_value(self.space(1), value, self.rng)
        if level > self.j:
            return value
        # keep the receiver's membership check satisfiable
        own_prev = self.seen[level - 1]
        if inst.member(level - 1, value, own_prev):
            return value
        blk = inst.system(level - 1).draw_block(own_prev, self.rng)
        return value if blk is None else blk


@dataclass(frozen=True)
class GreedySubstitute:
    """Substitute ``s_1`` and keep every check up to flow ``j`` passing; relay afterwards.

    A success then needs ``s_j`` and ``s'_j`` to share the block ``s_{j+1}``.
    """

    j: int = 1
    name = "greedy"

    def params(self) -> str:
        return f"j={self.j}"

    def mediator(self, instance, rng):
        if instance.phi >= 2 and not 1 <= self.j <= instance.phi - 1:
            raise DomainError(f"tamper depth j must lie in [1, {instance.phi - 1}]")
        return _Greedy(instance, rng, self.j)


TYPE1_STRATEGIES = (PassThrough, SubstituteFirstFlow, RandomTamper, GreedySubstitute)


@dataclass(frozen=True)
class Impersonate:
    """Oscar runs Alice on ``target`` (uniform if ``None``).

    The first ``k`` channel symbols are drawn i.i.d. from ``weights`` over the
    inputs of ``W2`` (the hull-optimal mixture by default).  The remaining
    symbols copy the codeword through the ``W2`` input whose row is closest to
    each ``W1`` row.
    """

    weights: tuple | None = None
    target: int | None = None
    name = "impersonate"

    def params(self) -> str:
        w = "hull" if self.weights is None else "/".join(f"{x:.4g}" for x in self.weights)
        t = "" if self.target is None else f";target={self.target}"
        return f"weights={w}{t}"

    def forge(self, W1: DMC, W2: DMC, weights, k: int, x: np.ndarray, rng) -> np.ndarray:
        w = as_distribution(weights if self.weights is None else self.weights, size=W2.input_size)
        prefix = rng.choice(W2.input_size, size=k, p=w)
        body = imitation_map(W1, W2)[np.asarray(x[k:])]
        return np.concatenate([prefix, body])


@dataclass(frozen=True)
class Replay:
    """Two-session replay of Alice's channel flow (see :func:`run_replay`)."""

    name = "replay"

    def params(self) -> str:
        return ""


# -- single trials ---------------------------------------------------------------


@dataclass(frozen=True)
class Type1Trial:
    success: bool
    phi_match: bool | None  # whether Alice's received s'_phi equals Bob's s_phi
    accepted: bool


def run_type1_detailed(instance: ProtocolInstance, strategy, rng: np.random.Generator) -> Type1Trial:
    r_s, r_m, r_p = rng.spawn(3)
    s = int(r_s.integers(instance.v1))
    med = strategy.mediator(instance, r_m)
    res = run_session(instance, s, r_p, tamper=med)
    out = res.outcome
    success = isinstance(out, Accept) and out.s != s
    phi_match = None
    if instance.phi >= 2 and instance.phi in res.alice.received and instance.phi in res.bob.sent:
        phi_match = res.alice.received[instance.phi] == res.bob.sent[instance.phi]
    return Type1Trial(success, phi_match, isinstance(out, Accept))


def run_type1(instance: ProtocolInstance, strategy, rng: np.random.Generator) -> bool:
    """Success iff Bob accepts some ``s' != s``."""
    return run_type1_detailed(instance, strategy, rng).success


def run_type2(instance: ProtocolInstance, strategy: Impersonate | None, rng: np.random.Generator) -> bool:
    """Success iff Bob accepts anything."""
    strategy = strategy or Impersonate()
    r_s, r_p, r_f = rng.spawn(3)
    s = strategy.target if strategy.target is not None else int(r_s.integers(instance.v1))

    def channel(x, r):
        x2 = strategy.forge(instance.W1, instance.W2, instance.anchor_weights, instance.k, x, r_f)
        return sample(instance.W2, x2, r)

    res = run_session(instance, s, r_p, channel=channel)
    return isinstance(res.outcome, Accept)


def run_type2_ni(scheme: NiScheme, strategy: Impersonate | None, rng: np.random.Generator,
                 trials: int = 1) -> np.ndarray:
    """Impersonation against the one-flow scheme; returns a success mask of length ``trials``."""
    strategy = strategy or Impersonate()
    weights = hull_distance(scheme.W1.row(scheme.anchor), scheme.W2.matrix).weights
    out = np.empty(trials, dtype=bool)
    for t in range(trials):
        s = strategy.target if strategy.target is not None else int(rng.integers(scheme.size))
        x = np.concatenate([np.full(scheme.k, scheme.anchor), scheme.code.codeword(s)])
        x2 = strategy.forge(scheme.W1, scheme.W2, weights, scheme.k, x, rng)
        z = sample(scheme.W2, x2, rng)
        out[t] = ni_verify_batch(scheme, z[None, :], s)[0]
    return out


def _drive_to_dmc(alice: Alice, bob: Bob):
    """Faithful noiseless exchange until Alice's channel flow; ``None`` on rejection."""
    msg = alice.next_flow(None)
    while True:
        if isinstance(msg, RejectMark):
            return None
        if isinstance(msg, DmcInput):
            return msg
        resp = bob.next_flow(Noiseless(msg.value))
        if not isinstance(resp, Noiseless):
            return None
        msg = alice.next_flow(resp)


@dataclass(frozen=True)
class ReplayTrial:
    success: bool
    good: bool          # Bob accepted the second session's value s'
    flows_equal: bool   # Alice's channel word equals the one Alice' would have sent


def run_replay_detailed(instance: ProtocolInstance, rng: np.random.Generator) -> ReplayTrial:
    """Oscar relays Alice's channel word into his own session with Bob."""
    r_s, r_a, r_bp, r_ap, r_b, r_ch = rng.spawn(6)
    s = int(r_s.integers(instance.v1))
    s_prime = int(r_s.integers(instance.v1))
    # session 1: Alice <-> simulated Bob'
    flow1 = _drive_to_dmc(Alice(instance, s, r_a), Bob(instance, r_bp))
    # session 2: simulated Alice' <-> real Bob
    bob = Bob(instance, r_b)
    flow2 = _drive_to_dmc(Alice(instance, s_prime, r_ap), bob)
    if flow1 is None or flow2 is None:
        return ReplayTrial(False, False, False)
    z = sample(instance.W1, flow1.x, r_ch)
    out = bob.next_flow(DmcOutput(z, flow2.value))
    good = isinstance(out, Accept) and out.s == s_prime
    equal = bool(np.array_equal(flow1.x, flow2.x))
    return ReplayTrial(good and s_prime != s, good, equal)


def run_replay(instance: ProtocolInstance, rng: np.random.Generator) -> bool:
    return run_replay_detailed(instance, rng).success


def run_replay_mental(instance: ProtocolInstance, rng: np.random.Generator) -> ReplayTrial:
    """The two independent honest executions used in the analysis of the replay attack."""
    r_s, r_a, r_bp, r_ap, r_b, r_ch = rng.spawn(6)
    s = int(r_s.integers(instance.v1))
    s_prime = int(r_s.integers(instance.v1))
    flow1 = _drive_to_dmc(Alice(instance, s, r_a), Bob(instance, r_bp))
    bob = Bob(instance, r_b)
    flow2 = _drive_to_dmc(Alice(instance, s_prime, r_ap), bob)
    if flow1 is None or flow2 is None:
        return ReplayTrial(False, False, False)
    z = sample(instance.W1, flow2.x, r_ch)
    out = bob.next_flow(DmcOutput(z, flow2.value))
    good = isinstance(out, Accept) and out.s == s_prime
    equal = bool(np.array_equal(flow1.x, flow2.x))
    return ReplayTrial(good and s_prime != s, good, equal)


# -- Monte Carlo -----------------------------------------------------------------

WILSON_Z = 1.959964


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


@dataclass(frozen=True)
class AttackReport:
    strategy: str
    params: str
    trials: int
    successes: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    theory_bound: float | None = None
    bound_kind: str | None = None  # "upper" or "lower"

    @property
    def sigma(self) -> float:
        return math.sqrt(self.p_hat * (1 - self.p_hat) / self.trials)

    @property
    def half_width(self) -> float:
        return (self.ci_hi - self.ci_lo) / 2

    def within_bound(self, slack: str = "sigma", k: float = 3.0) -> bool | None:
        """``p_hat <= bound + k*slack`` (upper) or ``p_hat >= bound - k*slack`` (lower)."""
        if self.theory_bound is None or self.bound_kind is None:
            return None
        s = self.sigma if slack == "sigma" else self.half_width
        if self.bound_kind == "upper":
            return self.p_hat <= self.theory_bound + k * s
        return self.p_hat >= self.theory_bound - k * s

    CSV_FIELDS = ("strategy", "params", "trials", "successes", "p_hat", "ci_lo", "ci_hi",
                  "theory_bound", "bound_kind")

    def csv_row(self) -> dict:
        return {f: getattr(self, f) for f in self.CSV_FIELDS}


def monte_carlo(trial: Callable[[np.random.Generator], bool], trials: int, master_seed: int,
                bound: float | None = None, bound_kind: str | None = None, workers: int = 1,
                strategy: str = "", params: str = "") -> AttackReport:
    """Run ``trial`` on independent streams ``(master_seed, i)`` and summarise.

    Results do not depend on ``workers``: each trial owns its stream and the
    reduction is a sum.
    """
    if trials < 100:
        raise DomainError("Monte Carlo estimates need at least 100 trials")
    if bound_kind not in (None, "upper", "lower"):
        raise DomainError("bound_kind must be 'upper' or 'lower'")

    def one(i):
        return bool(trial(trial_rng(master_seed, i)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(one, range(trials), chunksize=64))
    else:
        hits = sum(one(i) for i in range(trials))
    lo, hi = wilson_interval(hits, trials)
    return AttackReport(strategy, params, trials, hits, hits / trials, lo, hi, bound, bound_kind)


# -- analysis helpers ------------------------------------------------------------


def collision_entropy_check(P) -> bool:
    """``sum P^2 >= 2^{-H(P)}``, the step that turns a collision into an entropy bound."""
    P = as_distribution(P)
    return float((P ** 2).sum()) >= 2.0 ** (-entropy(P)) - 1e-12


def greedy_sweep(instance: ProtocolInstance, trials: int, master_seed: int, bound: float | None = None,
                 workers: int = 1) -> tuple[list[AttackReport], AttackReport]:
    """Run :class:`GreedySubstitute` for every depth ``j`` and return all reports plus the best."""
    depths = range(1, instance.phi) if instance.phi >= 2 else [1]
    reports = []
    for j in depths:
        strat = GreedySubstitute(j)
        reports.append(monte_carlo(lambda r, st=strat: run_type1(instance, st, r), trials,
                                   master_seed + j, bound, "upper", workers, strat.name, strat.params()))
    best = max(reports, key=lambda rep: rep.p_hat)
    return reports, best
