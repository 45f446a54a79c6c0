"""Set systems, iterated logarithms and the round schedule.

Two set-system representations share one small interface (``v``, ``b``,
``contains``, ``draw_block``, ``blocks_containing``):

* :class:`SetSystem` stores blocks explicitly and supports exhaustive
  verification.  Fine up to a few tens of thousands of blocks.
* :class:`ImplicitSetSystem` gives every element exactly ``m`` blocks chosen by
  a keyed pseudorandom permutation of ``[b]``.  Membership tests and uniform
  draws cost a handful of hash evaluations, so ``b`` in the billions is fine.
  Its co-occurrence guarantee comes from a union-bound certificate rather than
  exhaustive enumeration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConstructionError, DomainError, ScheduleError

MAX_V = 2 ** 40

# -- iterated logarithms ---------------------------------------------------------


def _log2(x) -> float:
    # math.log2 is exact for integer powers of two of any size
    if x <= 0:
        raise DomainError(f"logarithm of non-positive value {x!r}")
    return math.log2(x)


def iter_log(x, j: int) -> float:
    """``log2`` applied ``j`` times; ``iter_log(x, 0) == x``."""
    if j < 0:
        raise DomainError("iteration count must be non-negative")
    val = x
    for _ in range(j):
        val = _log2(val)
    return val


def log_star(x) -> int:
    """Smallest ``i`` such that ``iter_log(x, i) < 2``."""
    if x < 1:
        raise DomainError("log_star needs x >= 1")
    i, val = 0, x
    while val >= 2:
        val = _log2(val)
        i += 1
    return i


# -- schedule --------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    phi: int
    v_seq: tuple[int, ...]
    eps: float
    beta1: float
    beta2: float
    n_prime: int
    asymptotic: bool = False

    @property
    def v1(self) -> int:
        return self.v_seq[0]

    @property
    def final_size(self) -> int:
        """Size of the last source space, i.e. the number of codewords needed."""
        return self.v_seq[-1]

    @property
    def threshold(self) -> float:
        return self.beta2 * self.n_prime + math.sqrt(self.n_prime)

    def v(self, j: int) -> int:
        """1-based access to the size sequence."""
        return self.v_seq[j - 1]


def _schedule_step(phi: int, j: int, eps: float, v_j, max_v) -> int:
    log2_v = _log2(v_j)
    log2_val = (phi - j + 8) - 4.0 * math.log2(eps) + math.log2(log2_v) if log2_v > 0 else -math.inf
    if max_v is not None and log2_val > math.log2(max_v) + 1e-12:
        raise ScheduleError(
            f"v_{j + 1} ~ 2^{log2_val:.2f} exceeds the cap 2^{math.log2(max_v):.0f} "
            f"(phi={phi}, eps={eps!r}, v_{j}={v_j}); use a larger eps_override or raise max_v"
        )
    if log2_val < 1000:
        val = math.ldexp(1.0, phi - j + 8) * eps ** -4 * log2_v
        return int(math.floor(val))
    # beyond double range: keep 60 significant bits
    ip = int(math.floor(log2_val))
    mant = int(2.0 ** (log2_val - ip) * 2 ** 60)
    return mant << (ip - 60)


def make_schedule(v1: int, n_prime: int, beta1: float, beta2: float,
                  eps_override: float | None = None, max_v: int | None = MAX_V) -> Schedule:
    """Compute ``phi`` and the size sequence ``v_1 .. v_phi``.

    ``eps`` is ``2**(-beta1 * n_prime)`` unless ``eps_override`` is given.
    ``max_v=None`` disables the size cap (useful for auditing the asymptotic
    rule; the values are then only approximately exact above ``2**1000``).
    """
    v1 = int(v1)
    if v1 < 2:
        raise DomainError("v1 must be at least 2")
    if n_prime < 4:
        raise DomainError("n_prime must be at least 4")
    if beta1 <= 0 or beta2 <= 0:
        raise DomainError("beta1 and beta2 must be positive")
    if eps_override is not None:
        if not 0 < eps_override < 1:
            raise DomainError("eps_override must lie in (0, 1)")
        eps = float(eps_override)
    else:
        eps = 2.0 ** (-beta1 * n_prime)
        if eps == 0.0:
            raise ScheduleError("2^(-beta1 n') underflows double precision")
    threshold = beta2 * n_prime + math.sqrt(n_prime)
    phi = 0
    while iter_log(v1, phi) > threshold:
        phi += 2
    seq = [v1]
    for j in range(1, phi):
        nxt = _schedule_step(phi, j, eps, seq[-1], max_v)
        if nxt < 2:
            raise ScheduleError(
                f"recursion produced v_{j + 1}={nxt} < 2 from v_{j}={seq[-1]} "
                f"(phi={phi}, eps={eps!r})"
            )
        seq.append(nxt)
    return Schedule(phi, tuple(seq), eps, beta1, beta2, n_prime, eps_override is None)


def level_targets(b: int, t: float, eps: float) -> tuple[float, float]:
    """Block-count and co-occurrence targets ``(r, lambda)`` for level offset ``t``."""
    r = 2.0 ** (-0.25 * t - 2) * eps * b
    lam = 2.0 ** (-0.5 * t - 2) * eps ** 2 * b
    return r, lam


@dataclass(frozen=True)
class RecursionCheck:
    ok: bool
    per_step: tuple[bool, ...]
    final_ok: bool
    delta: float

    def __bool__(self):
        return self.ok


def check_recursion_bound(schedule: Schedule) -> RecursionCheck | None:
    """Check every ``v_{j+1}`` against the closed-form growth bound.

    Returns ``None`` when the bound does not apply (``phi < 2`` or the
    ``(phi-1)``-fold log of ``v_1`` is below 3).  The bound is evaluated with
    ``delta = 2**-9 * eps**4``, which matches the recursion constant.
    """
    phi = schedule.phi
    if phi < 2:
        return None
    k = phi - 1
    v1 = schedule.v1
    if iter_log(v1, k) < 3:
        return None
    eps = schedule.eps
    log2_inv_delta = 9 - 4 * math.log2(eps)
    delta = 2.0 ** -log2_inv_delta
    steps = []
    for j in range(1, k + 1):
        v_next = schedule.v_seq[j]
        # bound = 2^{k-j} L_j / delta + 2^{k-j+1}/delta * log2(2^{k-j+1}/delta), in log2 form
        a = (k - j) + log2_inv_delta + math.log2(iter_log(v1, j))
        c_exp = (k - j + 1) + log2_inv_delta
        b_term = c_exp + math.log2(c_exp)
        log2_bound = max(a, b_term) + math.log2(1 + 2.0 ** (min(a, b_term) - max(a, b_term)))
        steps.append(math.log2(v_next) < log2_bound)
    bn = -math.log2(eps)
    log2_cor = 9 + 4 * bn + math.log2(iter_log(v1, phi - 1) + 20 + 8 * bn)
    cor = math.log2(schedule.final_size) < log2_cor
    return RecursionCheck(all(steps) and cor, tuple(steps), cor, delta)


# -- explicit set systems --------------------------------------------------------


class SetSystem:
    """Explicit blocks over the ground set ``[v]`` with an inverted index."""

    def __init__(self, v: int, blocks: Iterable[Iterable[int]]):
        if v < 1:
            raise DomainError("ground set must be non-empty")
        self.v = int(v)
        cleaned = []
        for i, blk in enumerate(blocks):
            arr = np.unique(np.asarray(list(blk), dtype=np.int64))
            if arr.size and (arr[0] < 0 or arr[-1] >= v):
                raise DomainError(f"block {i} has elements outside [0, {v})")
            arr.setflags(write=False)
            cleaned.append(arr)
        self.blocks: tuple[np.ndarray, ...] = tuple(cleaned)
        inv: list[list[int]] = [[] for _ in range(self.v)]
        for i, arr in enumerate(self.blocks):
            for x in arr.tolist():
                inv[x].append(i)
        self._inverted = tuple(np.asarray(lst, dtype=np.int64) for lst in inv)
        self._member = [frozenset(blk.tolist()) for blk in self.blocks]

    @property
    def b(self) -> int:
        return len(self.blocks)

    materialized = True

    @classmethod
    def from_incidence(cls, incidence: np.ndarray) -> "SetSystem":
        m = np.asarray(incidence, dtype=bool)
        return cls(m.shape[0], (np.flatnonzero(m[:, i]) for i in range(m.shape[1])))

    def incidence(self) -> np.ndarray:
        m = np.zeros((self.v, self.b), dtype=bool)
        for i, blk in enumerate(self.blocks):
            m[blk, i] = True
        return m

    def _check_element(self, x: int) -> int:
        if not 0 <= x < self.v:
            raise DomainError(f"element {x} outside ground set [0, {self.v})")
        return int(x)

    def blocks_containing(self, x: int) -> np.ndarray:
        return self._inverted[self._check_element(x)]

    def degree(self, x: int) -> int:
        return int(self.blocks_containing(x).size)

    def contains(self, block: int, x: int) -> bool:
        if not 0 <= block < self.b or not 0 <= x < self.v:
            return False
        return int(x) in self._member[block]

    def draw_block(self, x: int, rng: np.random.Generator) -> int | None:
        lst = self.blocks_containing(x)
        if lst.size == 0:
            return None
        return int(lst[rng.integers(lst.size)])

    def to_text(self) -> str:
        lines = [f"# v={self.v} b={self.b}"]
        lines.extend(" ".join(str(x) for x in blk.tolist()) for blk in self.blocks)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, v: int | None = None) -> "SetSystem":
        blocks = []
        for line in text.splitlines():
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("v=") and v is None:
                        v = int(tok[2:])
                continue
            blocks.append([int(t) for t in line.split()])
        if v is None:
            v = 1 + max((max(bl) for bl in blocks if bl), default=0)
        return cls(v, blocks)


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    min_r: int
    max_lambda: int

    def __bool__(self):
        return self.ok


def cooccurrence_stats(S: SetSystem) -> tuple[int, int]:
    """Exhaustive (min block count, max pairwise co-occurrence)."""
    m = S.incidence().astype(np.float64)
    deg = m.sum(axis=1)
    min_r = int(deg.min()) if S.v else 0
    if S.v < 2 or S.b == 0:
        return min_r, 0
    co = m @ m.T
    np.fill_diagonal(co, -1)
    return min_r, int(co.max())


def verify_set_system(S: SetSystem, r: float, lam: float) -> VerifyReport:
    min_r, max_lam = cooccurrence_stats(S)
    return VerifyReport(min_r >= r and max_lam <= lam, min_r, max_lam)


def construct_set_system(v: int, b: int, inclusion_prob: float | None, rng: np.random.Generator,
                         max_retries: int = 10, r_target: float | None = None,
                         lam_target: float | None = None) -> SetSystem:
    """Bernoulli incidence construction, re-verified against the targets.

    ``inclusion_prob=None`` uses ``2 * r_target / b``.
    """
    if v < 2 or b < 1:
        raise DomainError("need v >= 2 and b >= 1")
    if inclusion_prob is None:
        if r_target is None:
            raise DomainError("inclusion_prob or r_target is required")
        inclusion_prob = min(1.0, 2.0 * r_target / b)
    if not 0.0 <= inclusion_prob <= 1.0:
        raise DomainError("inclusion_prob must lie in [0, 1]")
    if max_retries < 1:
        raise DomainError("max_retries must be positive")
    best, best_score = None, math.inf
    for _ in range(max_retries):
        inc = rng.random((v, b)) < inclusion_prob
        S = SetSystem.from_incidence(inc)
        if r_target is None and lam_target is None:
            return S
        rep = verify_set_system(S, -math.inf if r_target is None else r_target,
                                math.inf if lam_target is None else lam_target)
        if rep.ok:
            return S
        score = 0.0
        if r_target:
            score += max(0.0, r_target - rep.min_r) / r_target
        if lam_target is not None:
            score += max(0.0, rep.max_lambda - lam_target) / max(lam_target, 1.0)
        if score < best_score:
            best, best_score = (rep.min_r, rep.max_lambda), score
    raise ConstructionError(
        f"no attempt met r>={r_target}, lambda<={lam_target} in {max_retries} tries; "
        f"best achieved (r, lambda)={best}",
        best=best,
    )


# -- keyed permutations ----------------------------------------------------------

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
FEISTEL_ROUNDS = 6


def splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _M64
    z = ((z ^ (z >> 30)) * _MIX1) & _M64
    z = ((z ^ (z >> 27)) * _MIX2) & _M64
    return z ^ (z >> 31)


def splitmix64_np(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class KeyedPermutation:
    """Family of pseudorandom permutations of ``[size]`` indexed by a tweak.

    A balanced Feistel network on ``2h`` bits followed by cycle-walking back
    into range.  Scalar and vectorised paths compute the same function.
    """

    def __init__(self, size: int, key: int, rounds: int = FEISTEL_ROUNDS):
        if size < 1:
            raise DomainError("permutation domain must be non-empty")
        self.size = int(size)
        self.key = int(key) & _M64
        self.rounds = rounds
        bits = max(2, (self.size - 1).bit_length())
        self.half = (bits + 1) // 2
        self.mask = (1 << self.half) - 1
        self.round_keys = tuple(splitmix64(self.key ^ splitmix64(r + 1)) for r in range(rounds))

    # round keys mixed with the tweak
    def _tweak_keys(self, tweak: int) -> list[int]:
        t = splitmix64(int(tweak) & _M64)
        return [splitmix64(k ^ t) for k in self.round_keys]

    def _tweak_keys_np(self, tweak: np.ndarray) -> np.ndarray:
        t = splitmix64_np(np.asarray(tweak, dtype=np.uint64))
        ks = np.asarray(self.round_keys, dtype=np.uint64)
        return splitmix64_np(ks[None, :] ^ t[:, None])

    def _feistel(self, val: int, keys: Sequence[int]) -> int:
        h, mask = self.half, self.mask
        left, right = val >> h, val & mask
        for k in keys:
            left, right = right, left ^ (splitmix64(k ^ right) & mask)
        return (left << h) | right

    def _feistel_inv(self, val: int, keys: Sequence[int]) -> int:
        h, mask = self.half, self.mask
        left, right = val >> h, val & mask
        for k in reversed(keys):
            left, right = right ^ (splitmix64(k ^ left) & mask), left
        return (left << h) | right

    def forward(self, tweak: int, i: int) -> int:
        keys = self._tweak_keys(tweak)
        val = self._feistel(int(i), keys)
        while val >= self.size:
            val = self._feistel(val, keys)
        return val

    def inverse(self, tweak: int, j: int) -> int:
        keys = self._tweak_keys(tweak)
        val = self._feistel_inv(int(j), keys)
        while val >= self.size:
            val = self._feistel_inv(val, keys)
        return val

    def forward_np(self, tweak, i) -> np.ndarray:
        """Vectorised forward map; ``tweak`` and ``i`` broadcast together."""
        tweak, i = np.broadcast_arrays(np.asarray(tweak, dtype=np.uint64),
                                       np.asarray(i, dtype=np.uint64))
        shape = i.shape
        tw = tweak.ravel()
        val = i.ravel().copy()
        uniq, inv = np.unique(tw, return_inverse=True)
        keys = self._tweak_keys_np(uniq)[inv]
        h = np.uint64(self.half)
        mask = np.uint64(self.mask)
        size = np.uint64(self.size)
        todo = np.arange(val.size)
        while todo.size:
            v = val[todo]
            kk = keys[todo]
            left, right = v >> h, v & mask
            for r in range(self.rounds):
                left, right = right, left ^ (splitmix64_np(kk[:, r] ^ right) & mask)
            v = (left << h) | right
            val[todo] = v
            todo = todo[v >= size]
        return val.reshape(shape).astype(np.int64)


# -- implicit fixed-degree set systems -------------------------------------------


@dataclass(frozen=True)
class Certificate:
    """Union-bound certificate for a fixed-degree pseudorandom system.

    ``log_failure_bound`` is the natural log of an upper bound on the
    probability (over the key) that some pair co-occurs in more than
    ``lam_target`` blocks, treating each element's block set as a uniform
    ``m``-subset of ``[b]``.
    """

    r_ok: bool
    log_failure_bound: float
    audited_pairs: int
    audit_max_lambda: int | None
    ok: bool

    def __bool__(self):
        return self.ok


CERT_LOG_THRESHOLD = math.log(1e-9)


class ImplicitSetSystem:
    """Every element ``x`` lies in exactly ``m`` blocks ``{pi_x(i) : i < m}``."""

    materialized = False

    def __init__(self, v: int, b: int, m: int, key: int):
        if v < 1 or b < 1:
            raise DomainError("need v >= 1 and b >= 1")
        if not 0 <= m <= b:
            raise DomainError("degree m must lie in [0, b]")
        self.v, self.b, self.m = int(v), int(b), int(m)
        self.key = int(key) & _M64
        self.perm = KeyedPermutation(self.b, self.key)

    def _check_element(self, x: int) -> int:
        if not 0 <= x < self.v:
            raise DomainError(f"element {x} outside ground set [0, {self.v})")
        return int(x)

    def degree(self, x: int) -> int:
        self._check_element(x)
        return self.m

    def contains(self, block: int, x: int) -> bool:
        if not 0 <= block < self.b or not 0 <= x < self.v:
            return False
        return self.perm.inverse(x, block) < self.m

    def draw_block(self, x: int, rng: np.random.Generator) -> int | None:
        x = self._check_element(x)
        if self.m == 0:
            return None
        return self.perm.forward(x, int(rng.integers(self.m)))

    def blocks_containing(self, x: int) -> np.ndarray:
        x = self._check_element(x)
        return np.sort(self.perm.forward_np(x, np.arange(self.m, dtype=np.uint64)))

    def materialize(self, max_cells: int = 50_000_000) -> SetSystem:
        if self.v * self.m > max_cells:
            raise DomainError(f"{self.v} x {self.m} memberships exceed max_cells={max_cells}")
        xs = np.repeat(np.arange(self.v, dtype=np.uint64), self.m)
        ii = np.tile(np.arange(self.m, dtype=np.uint64), self.v)
        blk = self.perm.forward_np(xs, ii).reshape(self.v, self.m)
        inc = np.zeros((self.v, self.b), dtype=bool)
        inc[np.arange(self.v)[:, None], blk] = True
        return SetSystem.from_incidence(inc)

    def certificate(self, r_target: float, lam_target: float, rng: np.random.Generator | None = None,
                    audit_pairs: int = 0) -> Certificate:
        r_ok = self.m >= r_target
        if self.v < 2:
            return Certificate(r_ok, -math.inf, 0, None, r_ok)
        mean = self.m * self.m / self.b
        t = lam_target - mean
        if self.m == 0:
            log_bound = -math.inf
        elif t <= 0:
            log_bound = 0.0
        else:
            # hypergeometric Hoeffding tail, union over all pairs
            log_pairs = math.log(self.v) + math.log(self.v - 1) - math.log(2)
            log_bound = min(0.0, log_pairs - 2.0 * t * t / self.m)
        audit_max = None
        if audit_pairs and rng is not None:
            audit_max = 0
            for _ in range(audit_pairs):
                x, y = rng.choice(self.v, size=2, replace=False)
                co = np.intersect1d(self.blocks_containing(int(x)), self.blocks_containing(int(y)),
                                    assume_unique=True).size
                audit_max = max(audit_max, int(co))
        ok = r_ok and log_bound <= CERT_LOG_THRESHOLD and (audit_max is None or audit_max <= lam_target)
        return Certificate(r_ok, log_bound, audit_pairs if audit_max is not None else 0, audit_max, ok)
