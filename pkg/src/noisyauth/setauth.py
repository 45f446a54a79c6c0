"""The multi-round set-system protocol as Alice/Bob state machines.

Iteration ``l = 1 .. phi`` carries one noiseless flow: odd iterations go from
Alice to Bob, even ones from Bob to Alice.  The receiver of ``s'_l`` checks
that its own previous value lies in block ``s'_l`` of the previous level's set
system, then (if ``l < phi``) draws its next value uniformly among the blocks
of level ``l`` that contain ``s'_l``.  After iteration ``phi`` (``phi`` is even,
so Alice is the receiver) Alice sends ``a^k | C[s'_phi]`` over ``W1`` and Bob
accepts ``s'_1`` iff the first ``k`` outputs look like ``W1(.|a)`` and the rest
decode to his own ``s_phi``.

With ``phi = 0`` there are no set systems: Alice sends ``a^k | C[s]`` over the
channel together with ``s`` on the noiseless channel, and Bob accepts when the
decoded index equals the received ``s``.

Indices are 0-based throughout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Protocol, Union

import numpy as np

from .channel import DMC, capacity, choose_anchor, hull_distance, sample, symbols_to_str
from .codes import ChannelCode, build_random_code, ml_decode
from .errors import ConstructionError, DomainError, InfeasibleError, ProtocolError
from .setsys import (ImplicitSetSystem, Schedule, SetSystem, level_targets, make_schedule,
                     verify_set_system, MAX_V)

ANCHOR_TOL = 1e-9

# -- flows and outcomes ----------------------------------------------------------


@dataclass(frozen=True)
class Noiseless:
    value: int


@dataclass(frozen=True, eq=False)
class DmcInput:
    x: np.ndarray
    value: int | None = None  # noiseless companion, used only when phi = 0


@dataclass(frozen=True, eq=False)
class DmcOutput:
    z: np.ndarray
    value: int | None = None


@dataclass(frozen=True)
class RejectMark:
    pass


Flow = Union[Noiseless, DmcInput, DmcOutput, RejectMark]


@dataclass(frozen=True)
class Accept:
    s: int


@dataclass(frozen=True)
class Reject:
    pass


Outcome = Union[Accept, Reject]


# -- instance --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProtocolInstance:
    W1: DMC
    W2: DMC
    schedule: Schedule
    set_systems: tuple
    code: ChannelCode
    anchor: int
    gamma: float
    k: int
    n_prime: int
    anchor_weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        phi = self.schedule.phi
        if phi % 2:
            raise DomainError("phi must be even")
        if len(self.set_systems) != max(0, phi - 1):
            raise DomainError(f"expected {max(0, phi - 1)} set systems, got {len(self.set_systems)}")
        for j, S in enumerate(self.set_systems, start=1):
            if S.v != self.schedule.v(j) or S.b != self.schedule.v(j + 1):
                raise DomainError(f"set system {j} has shape ({S.v}, {S.b}), expected "
                                  f"({self.schedule.v(j)}, {self.schedule.v(j + 1)})")
        if self.code.size != self.schedule.final_size or self.code.n_prime != self.n_prime:
            raise DomainError("code must have v_phi codewords of length n_prime")
        if self.gamma <= 0:
            raise DomainError("gamma must be positive")
        if self.k < 1:
            raise DomainError("k must be at least 1")

    @property
    def phi(self) -> int:
        return self.schedule.phi

    @property
    def v1(self) -> int:
        return self.schedule.v1

    @property
    def n_total(self) -> int:
        return self.k + self.n_prime

    def system(self, level: int):
        """Set system of level ``1 .. phi-1``."""
        return self.set_systems[level - 1]

    def member(self, level: int, block: int, x: int) -> bool:
        """Is ``x`` in block ``block`` of level ``level``?  Level 0 is the sentinel."""
        if level == 0:
            return 0 <= block < self.v1
        return self.system(level).contains(block, x)

    def dmc_word(self, index: int) -> np.ndarray:
        return np.concatenate([np.full(self.k, self.anchor, dtype=np.int64), self.code.codeword(index)])

    def anchor_check(self, z_prefix) -> bool:
        z_prefix = np.asarray(z_prefix)
        q = self.W1.output_size
        freq = np.bincount(z_prefix, minlength=q) / z_prefix.size
        radius = self.gamma / (2 * q)
        return bool(np.all(np.abs(freq - self.W1.row(self.anchor)) <= radius + ANCHOR_TOL))


def ceil_sqrt(n: int) -> int:
    k = math.isqrt(n)
    return k if k * k == n else k + 1


def round_count(instance: ProtocolInstance) -> int:
    """Number of flows: ``phi`` noiseless ones plus the channel flow."""
    return instance.phi + 1


# -- parties ---------------------------------------------------------------------


class _Party:
    def __init__(self, instance: ProtocolInstance, rng: np.random.Generator):
        self.instance = instance
        self.rng = rng
        self.sent: dict[int, int] = {}
        self.received: dict[int, int] = {}
        self.done = False
        self.level = 0

    def _guard(self):
        if self.done:
            raise ProtocolError(f"{type(self).__name__} has already finished")

    def _check_and_draw(self, level: int, value: int):
        """Receiver logic of iteration ``level``.

        Returns the next value to send, ``None`` on rejection, or ``True`` when
        this was the last iteration and the check passed.
        """
        inst = self.instance
        self.received[level] = value
        own_prev = self.sent.get(level - 1, 0)
        if not inst.member(level - 1, value, own_prev):
            return None
        if level == inst.phi:
            return True
        nxt = inst.system(level).draw_block(value, self.rng)
        if nxt is None:
            return None
        self.sent[level + 1] = nxt
        return nxt


class Alice(_Party):
    def __init__(self, instance: ProtocolInstance, s: int, rng: np.random.Generator):
        if not 0 <= s < instance.v1:
            raise DomainError(f"source state {s} outside [0, {instance.v1})")
        super().__init__(instance, rng)
        self.s = int(s)

    def next_flow(self, incoming: Flow | None = None) -> Flow:
        self._guard()
        inst = self.instance
        if self.level == 0:
            if incoming is not None:
                raise ProtocolError("Alice speaks first")
            if inst.phi == 0:
                self.done = True
                return DmcInput(inst.dmc_word(self.s), value=self.s)
            self.level = 1
            self.sent[1] = self.s
            return Noiseless(self.s)
        if not isinstance(incoming, Noiseless):
            self.done = True
            return RejectMark()
        level = self.level + 1
        value = int(incoming.value)
        res = self._check_and_draw(level, value)
        if res is None:
            self.done = True
            return RejectMark()
        if res is True:
            self.done = True
            return DmcInput(inst.dmc_word(value))
        self.level = level + 1
        return Noiseless(int(res))


class Bob(_Party):
    outcome: Outcome | None = None

    def next_flow(self, incoming: Flow):
        """Returns the next flow, or an :class:`Accept`/:class:`Reject` outcome."""
        self._guard()
        inst = self.instance
        if isinstance(incoming, DmcOutput):
            return self._finish(incoming)
        if not isinstance(incoming, Noiseless) or inst.phi == 0:
            return self._end(Reject())
        level = self.level + 1
        if level % 2 == 0 or level >= inst.phi:
            return self._end(Reject())
        res = self._check_and_draw(level, int(incoming.value))
        if res is None:
            return self._end(Reject())
        self.level = level + 1
        return Noiseless(int(res))

    def _end(self, outcome):
        self.done = True
        self.outcome = outcome
        return outcome

    def _finish(self, out: DmcOutput):
        inst = self.instance
        z = np.asarray(out.z)
        if z.size != inst.n_total:
            return self._end(Reject())
        if inst.phi == 0:
            if out.value is None or not 0 <= out.value < inst.v1:
                return self._end(Reject())
            self.received[1] = int(out.value)
            expected, claimed = int(out.value), int(out.value)
        else:
            if self.level != inst.phi:
                return self._end(Reject())
            expected, claimed = self.sent[inst.phi], self.received[1]
        if not inst.anchor_check(z[:inst.k]):
            return self._end(Reject())
        if ml_decode(inst.code, inst.W1, z[inst.k:]) != expected:
            return self._end(Reject())
        return self._end(Accept(claimed))


# -- sessions --------------------------------------------------------------------


class Mediator(Protocol):
    """Hook for a man in the middle.  May rewrite noiseless values only."""

    def deliver(self, level: int, sender: str, value: int) -> int: ...

    def observe_dmc(self, x: np.ndarray, z: np.ndarray) -> None: ...


@dataclass
class SessionResult:
    outcome: Outcome
    alice: Alice
    bob: Bob
    dmc_input: np.ndarray | None = None
    dmc_output: np.ndarray | None = None


def _log(transcript, session, direction, kind, payload):
    if transcript is not None:
        transcript.append(f"{session} {direction} {kind} {payload}")


def run_session(instance: ProtocolInstance, s: int, rng: np.random.Generator, tamper: Mediator | None = None,
                transcript: list | None = None, session_id: int = 0, channel=None) -> SessionResult:
    """Drive Alice and Bob to completion; ``tamper`` sits on the noiseless channel.

    ``channel(x, rng) -> z`` replaces the honest ``W1`` transmission; it is how
    an impersonator substitutes his own ``W2`` input.
    """
    ra, rb, rc = rng.spawn(3)
    alice = Alice(instance, s, ra)
    bob = Bob(instance, rb)
    msg = alice.next_flow(None)
    sender = "A"
    level = 1
    x_sent = z_recv = None
    while True:
        direction = "A->B" if sender == "A" else "B->A"
        if isinstance(msg, RejectMark):
            _log(transcript, session_id, direction, "reject", "-")
            return SessionResult(Reject(), alice, bob, x_sent, z_recv)
        if isinstance(msg, DmcInput):
            x_sent = msg.x
            if channel is None:
                z_recv = sample(instance.W1, msg.x, rc)
            else:
                z_recv = np.asarray(channel(msg.x, rc))
            value = msg.value
            if value is not None:
                _log(transcript, session_id, direction, "noiseless", value)
                if tamper is not None:
                    value = tamper.deliver(1, "A", value)
            if tamper is not None:
                tamper.observe_dmc(x_sent, z_recv)
            _log(transcript, session_id, "A->W", "dmc_in", symbols_to_str(x_sent))
            _log(transcript, session_id, "W->B", "dmc_out", symbols_to_str(z_recv))
            outcome = bob.next_flow(DmcOutput(z_recv, value))
            _log(transcript, session_id, "B", "outcome",
                 f"accept {outcome.s}" if isinstance(outcome, Accept) else "reject")
            return SessionResult(outcome, alice, bob, x_sent, z_recv)
        _log(transcript, session_id, direction, "noiseless", msg.value)
        value = msg.value if tamper is None else tamper.deliver(level, sender, msg.value)
        if sender == "A":
            resp = bob.next_flow(Noiseless(value))
            if isinstance(resp, Reject):
                _log(transcript, session_id, "B", "outcome", "reject")
                return SessionResult(resp, alice, bob)
            sender = "B"
        else:
            resp = alice.next_flow(Noiseless(value))
            sender = "A"
        msg = resp
        level += 1


def run_honest(instance: ProtocolInstance, s: int, rng: np.random.Generator) -> Outcome:
    return run_session(instance, s, rng).outcome


# -- setup -----------------------------------------------------------------------


def _build_level(v: int, b: int, r: float, lam: float, rng, explicit_cells: int, max_retries: int):
    m = min(b, math.ceil(r))
    best = None
    for _ in range(max_retries):
        key = int(rng.integers(0, 2 ** 63))
        implicit = ImplicitSetSystem(v, b, m, key)
        if v * b <= explicit_cells:
            S = implicit.materialize(max_cells=explicit_cells)
            rep = verify_set_system(S, r, lam)
            if rep.ok:
                return S
            best = (rep.min_r, rep.max_lambda)
        else:
            cert = implicit.certificate(r, lam)
            if cert.ok:
                return implicit
            best = (m, cert.log_failure_bound)
    raise ConstructionError(
        f"no set system on v={v}, b={b} met r>={r:.4g}, lambda<={lam:.4g}; best={best}", best=best)


def setup(W1: DMC, W2: DMC, v1: int, n_prime: int, beta1: float | None = None, beta2: float | None = None,
          eps_override: float | None = None, rng: np.random.Generator | None = None, rate: float | None = None,
          max_v: int | None = MAX_V, explicit_cells: int = 50_000_000, max_retries: int = 8) -> ProtocolInstance:
    """Assemble schedule, set systems, code and anchor for the given channels.

    Defaults: ``R = C/2`` with ``C`` the capacity of ``W1``, ``beta1 = R/8``,
    ``beta2 = R/4``.  Set systems small enough to enumerate are verified
    exhaustively; larger ones use the implicit representation and its
    union-bound certificate.
    """
    if rng is None:
        raise DomainError("setup needs an explicit random stream")
    a, gam = choose_anchor(W1, W2)
    weights = hull_distance(W1.row(a), W2.matrix).weights
    C = capacity(W1)
    if C <= 1e-9:
        raise InfeasibleError("W1 has zero capacity; the channel cannot carry a codeword")
    R = C / 2 if rate is None else rate
    if beta1 is None:
        beta1 = R / 8
    if beta2 is None:
        beta2 = R / 4
    if not (beta1 < R / 4 and 4 * beta1 + beta2 < R):
        warnings.warn(f"beta1={beta1}, beta2={beta2} violate beta1 < R/4 and 4 beta1 + beta2 < R (R={R:.4f})",
                      stacklevel=2)
    sched = make_schedule(v1, n_prime, beta1, beta2, eps_override=eps_override, max_v=max_v)
    sys_rng, code_rng = rng.spawn(2)
    systems = []
    for j in range(1, sched.phi):
        v, b = sched.v(j), sched.v(j + 1)
        r, lam = level_targets(b, sched.phi - j, sched.eps)
        systems.append(_build_level(v, b, r, lam, sys_rng, explicit_cells, max_retries))
    code = build_random_code(W1, n_prime, sched.final_size, code_rng)
    return ProtocolInstance(W1, W2, sched, tuple(systems), code, a, gam, ceil_sqrt(n_prime), n_prime, weights)


def message_distribution(instance: ProtocolInstance) -> np.ndarray:
    """Exact law of the channel codeword index for a uniform source.

    Needs every set system to be explicit.  For ``phi = 0`` the index is the
    source itself.
    """
    p = np.full(instance.v1, 1.0 / instance.v1)
    for j in range(1, instance.phi):
        S = instance.system(j)
        if not getattr(S, "materialized", False):
            raise DomainError("message distribution needs explicit set systems")
        nxt = np.zeros(S.b)
        for x in range(S.v):
            blocks = S.blocks_containing(x)
            if blocks.size == 0:
                continue  # that branch rejects before any channel use
            nxt[blocks] += p[x] / blocks.size
        p = nxt
    return p
