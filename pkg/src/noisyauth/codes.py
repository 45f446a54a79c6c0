"""Channel codes for the final DMC flow and minimum-distance codebooks.

A :class:`ChannelCode` is a product of one or more random component codebooks.
Codeword ``i`` is the concatenation of component words selected by the
mixed-radix digits of ``i`` (most significant digit first).  With a single
component this is an ordinary random codebook.  Splitting into components keeps
exact maximum-likelihood decoding cheap when the codebook has hundreds of
millions of words: the likelihood factorises over components, so the global
optimum is found component by component, with a small correction that keeps the
decoded index below ``N``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .channel import DMC, _as_symbols, binary_entropy, blahut_arimoto, sample
from .errors import ConstructionError, DomainError

TIE_RTOL = 1e-12
TIE_ATOL = 1e-9
REJECT = -1


def hamming_distance(x, y) -> int:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DomainError(f"length mismatch: {x.shape} vs {y.shape}")
    return int(np.count_nonzero(x != y))


def _digits(i: int, radices) -> list[int]:
    out = []
    for r in reversed(radices):
        i, d = divmod(i, r)
        out.append(d)
    return out[::-1]


def _tie_argmax(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Lowest index whose value is within tolerance of the maximum."""
    mx = values.max(axis=axis, keepdims=True)
    finite = np.isfinite(mx)
    tol = TIE_ATOL + TIE_RTOL * np.abs(np.where(finite, mx, 0.0))
    close = values >= np.where(finite, mx - tol, mx)
    return np.argmax(close, axis=axis)


@dataclass(frozen=True, eq=False)
class ChannelCode:
    components: tuple[np.ndarray, ...]
    size: int
    n_prime: int
    alphabet_size: int
    _onehot: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=np.int64) for c in self.components)
        for c in comps:
            c.setflags(write=False)
        object.__setattr__(self, "components", comps)
        if sum(c.shape[1] for c in comps) != self.n_prime:
            raise DomainError("component lengths must add up to n_prime")
        if self.size < 1 or self.size > math.prod(self.radices):
            raise DomainError("size must lie in [1, product of component sizes]")
        hots = []
        for c in comps:
            n_i = c.shape[1]
            oh = np.zeros((c.shape[0], self.alphabet_size * n_i))
            oh[np.arange(c.shape[0])[:, None], c * n_i + np.arange(n_i)] = 1.0
            hots.append(oh)
        object.__setattr__(self, "_onehot", tuple(hots))

    @classmethod
    def from_codebook(cls, codebook, alphabet_size: int) -> "ChannelCode":
        cb = np.asarray(codebook, dtype=np.int64)
        if cb.ndim != 2:
            raise DomainError("codebook must be 2-D")
        if len({tuple(r) for r in cb.tolist()}) != cb.shape[0]:
            raise DomainError("codewords must be distinct")
        _as_symbols(cb, alphabet_size)
        return cls((cb,), cb.shape[0], cb.shape[1], alphabet_size)

    @property
    def radices(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.components)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.components)

    @property
    def rate(self) -> float:
        return math.log2(self.size) / self.n_prime

    def codeword(self, i: int) -> np.ndarray:
        if not 0 <= i < self.size:
            raise DomainError(f"codeword index {i} outside [0, {self.size})")
        d = _digits(int(i), self.radices)
        return np.concatenate([c[k] for c, k in zip(self.components, d)])

    def codewords(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise DomainError("codeword index out of range")
        parts = []
        rest = idx.copy()
        for c in reversed(self.components):
            rest, d = np.divmod(rest, c.shape[0])
            parts.append(c[d])
        return np.concatenate(parts[::-1], axis=-1)

    def codebook(self) -> np.ndarray:
        """All codewords; only sensible for small codes."""
        return self.codewords(np.arange(self.size))

    def to_text(self) -> str:
        return "".join(" ".join(map(str, w.tolist())) + "\n" for w in self.codebook())

    # -- likelihoods ---------------------------------------------------------

    def _component_loglik(self, W: DMC, Y: np.ndarray) -> list[np.ndarray]:
        out, start = [], 0
        logw = W.log_matrix
        for c, oh in zip(self.components, self._onehot):
            n_i = c.shape[1]
            seg = Y[:, start:start + n_i]
            start += n_i
            L = logw[:, seg].transpose(1, 0, 2).reshape(Y.shape[0], -1)  # (T, p*n_i)
            bad = np.isneginf(L)
            ll = np.where(bad, 0.0, L) @ oh.T
            if bad.any():
                ll[(bad.astype(float) @ oh.T) > 0] = -np.inf
            out.append(ll)
        return out


def _decode_batch(code: ChannelCode, W: DMC, Y: np.ndarray) -> np.ndarray:
    lls = code._component_loglik(W, Y)
    T = Y.shape[0]
    m = len(lls)
    e = _digits(code.size - 1, code.radices)
    best_arg = [_tie_argmax(ll) for ll in lls]
    best_val = [np.take_along_axis(ll, a[:, None], 1)[:, 0] for ll, a in zip(lls, best_arg)]
    scores = np.full((T, m + 1), -np.inf)
    restricted_arg = np.zeros((T, m), dtype=np.int64)
    prefix = np.zeros(T)
    for p in range(m):
        if e[p] > 0:
            sub = lls[p][:, :e[p]]
            ra = _tie_argmax(sub)
            restricted_arg[:, p] = ra
            val = prefix + np.take_along_axis(sub, ra[:, None], 1)[:, 0]
            for q in range(p + 1, m):
                val = val + best_val[q]
            scores[:, p] = val
        prefix = prefix + lls[p][:, e[p]]
    scores[:, m] = prefix
    cat = _tie_argmax(scores)
    top = scores[np.arange(T), cat]
    out = np.full(T, REJECT, dtype=np.int64)
    for row in range(T):
        if not np.isfinite(top[row]):
            continue
        p = cat[row]
        digits = list(e[:p])
        if p < m:
            digits.append(int(restricted_arg[row, p]))
            digits.extend(int(best_arg[q][row]) for q in range(p + 1, m))
        idx = 0
        for d, r in zip(digits, code.radices):
            idx = idx * r + d
        out[row] = idx
    return out


def ml_decode_batch(code: ChannelCode, W: DMC, Y) -> np.ndarray:
    """Decode each row of ``Y``; ``-1`` marks a rejected (all-zero-likelihood) word."""
    if W.input_size != code.alphabet_size:
        raise DomainError("channel input alphabet does not match the code")
    Y = np.atleast_2d(_as_symbols(Y, W.output_size))
    if Y.shape[1] != code.n_prime:
        raise DomainError(f"received word has length {Y.shape[1]}, expected {code.n_prime}")
    out = np.empty(Y.shape[0], dtype=np.int64)
    step = 4096
    for s in range(0, Y.shape[0], step):
        out[s:s + step] = _decode_batch(code, W, Y[s:s + step])
    return out


def ml_decode(code: ChannelCode, W: DMC, y) -> int | None:
    """Maximum-likelihood index, lowest index on ties, ``None`` if no codeword fits."""
    idx = int(ml_decode_batch(code, W, np.asarray(y).reshape(1, -1))[0])
    return None if idx == REJECT else idx


# -- construction ----------------------------------------------------------------


def _int_root_ceil(n: int, m: int) -> int:
    k = max(1, int(round(n ** (1.0 / m))))
    while k ** m < n:
        k += 1
    while k > 1 and (k - 1) ** m >= n:
        k -= 1
    return k


def _distinct_words(count: int, length: int, dist: np.ndarray, rng, max_rounds: int = 1000) -> np.ndarray:
    p = dist.size
    support = int(np.count_nonzero(dist > 0))
    if support ** length < count:
        raise DomainError(f"{support}^{length} words cannot hold {count} distinct codewords")
    words = rng.choice(p, size=(count, length), p=dist)
    for _ in range(max_rounds):
        _, first = np.unique(words, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(count), first)
        if dup.size == 0:
            return words
        words[dup] = rng.choice(p, size=(dup.size, length), p=dist)
    raise ConstructionError("could not draw distinct codewords")


def build_random_code(W: DMC, n_prime: int, num_codewords: int, rng: np.random.Generator,
                      max_component: int = 4096, input_dist=None) -> ChannelCode:
    """Random code with i.i.d. symbols from a capacity-achieving input law."""
    N = int(num_codewords)
    if N < 2:
        raise DomainError("need at least two codewords")
    if n_prime < 1:
        raise DomainError("n_prime must be positive")
    p = W.input_size
    cap, opt = blahut_arimoto(W)
    dist = opt if input_dist is None else np.asarray(input_dist, dtype=float)
    dist = np.where(dist < 1e-12, 0.0, dist)
    dist = dist / dist.sum()
    m = 1
    while _int_root_ceil(N, m) > max_component:
        m += 1
    if m > n_prime:
        raise DomainError(f"{N} codewords need more components than the {n_prime} positions")
    radix = N if m == 1 else _int_root_ceil(N, m)
    lengths = [n_prime // m + (1 if i < n_prime % m else 0) for i in range(m)]
    for n_i in lengths:
        if p ** n_i < radix:
            raise DomainError(f"alphabet^{n_i} = {p ** n_i} is smaller than {radix} codewords")
    rate = math.log2(N) / n_prime
    if rate >= cap:
        warnings.warn(f"code rate {rate:.4f} is not below capacity {cap:.4f}", stacklevel=2)
    comps = tuple(_distinct_words(radix, n_i, dist, rng) for n_i in lengths)
    return ChannelCode(comps, N, n_prime, p)


# -- error estimation ------------------------------------------------------------


def wilson_interval(successes: int, trials: int) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(int(successes), int(trials)).proportion_ci(0.95, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class ErrorEstimate:
    rate: float
    ci_lo: float
    ci_hi: float
    trials: int
    errors: int
    per_codeword: bool
    average: float


def estimate_error_rate(code: ChannelCode, W: DMC, trials: int, rng: np.random.Generator) -> ErrorEstimate:
    """Maximum per-codeword error for ``N <= 256``, else average error over uniform messages."""
    if trials < 1:
        raise DomainError("trials must be positive")
    N = code.size
    if N <= 256:
        per = max(1, trials // N)
        worst, worst_err, total = -1.0, 0, 0
        for i in range(N):
            Y = sample(W, code.codeword(i), rng, size=per)
            err = int(np.count_nonzero(ml_decode_batch(code, W, Y) != i))
            total += err
            if err / per > worst:
                worst, worst_err = err / per, err
        lo, hi = wilson_interval(worst_err, per)
        return ErrorEstimate(worst, lo, hi, per * N, worst_err, True, total / (per * N))
    idx = rng.integers(N, size=trials)
    Y = sample(W, code.codewords(idx), rng)
    err = int(np.count_nonzero(ml_decode_batch(code, W, Y) != idx))
    lo, hi = wilson_interval(err, trials)
    return ErrorEstimate(err / trials, lo, hi, trials, err, False, err / trials)


# -- minimum-distance codes ------------------------------------------------------


def gv_log2_bound(alphabet_size: int, n: int, alpha: float) -> float:
    lq = math.log2(alphabet_size)
    return n * lq - n * (binary_entropy(alpha) + alpha * lq) - math.log2(alpha * n)


def gv_size_bound(alphabet_size: int, n: int, alpha: float) -> float:
    """Guaranteed size ``(1/(alpha n)) q^n 2^{-n(h(alpha) + alpha log q)}``."""
    return 2.0 ** gv_log2_bound(alphabet_size, n, alpha)


@dataclass(frozen=True, eq=False)
class DistanceCode:
    codebook: np.ndarray
    alpha: float
    alphabet_size: int
    min_distance: int

    @property
    def n(self) -> int:
        return self.codebook.shape[1]

    @property
    def size(self) -> int:
        return self.codebook.shape[0]

    def codeword(self, i: int) -> np.ndarray:
        if not 0 <= i < self.size:
            raise DomainError(f"codeword index {i} outside [0, {self.size})")
        return self.codebook[i]

    def to_text(self) -> str:
        return "".join(" ".join(map(str, w.tolist())) + "\n" for w in self.codebook)


ENUMERATION_LIMIT = 2 ** 22


def pairwise_min_distance(codebook: np.ndarray, alphabet_size: int) -> int:
    """Exact minimum pairwise Hamming distance (``n + 1`` for a single word)."""
    cb = np.asarray(codebook)
    N, n = cb.shape
    if N < 2:
        return n + 1
    oh = np.zeros((N, alphabet_size * n), dtype=np.float32)
    oh[np.arange(N)[:, None], cb * n + np.arange(n)] = 1.0
    best = n + 1
    step = 1024
    for s in range(0, N, step):
        agree = oh[s:s + step] @ oh.T
        dist = n - np.rint(agree).astype(np.int64)
        rows = np.arange(s, min(s + step, N))
        dist[rows - s, rows] = n + 1
        best = min(best, int(dist.min()))
    return best


def _index_to_words(idx: np.ndarray, q: int, n: int) -> np.ndarray:
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers) % q


def _greedy_enumerated(q: int, n: int, d: int, order: np.ndarray, cap: int) -> np.ndarray:
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    patterns = [np.zeros(n, dtype=np.int64)]
    for w in range(1, d):
        for pos in itertools.combinations(range(n), w):
            for shifts in itertools.product(range(1, q), repeat=w):
                pat = np.zeros(n, dtype=np.int64)
                pat[list(pos)] = shifts
                patterns.append(pat)
    pats = np.stack(patterns)
    forbidden = np.zeros(q ** n, dtype=bool)
    chosen = []
    for word in order.tolist():
        if forbidden[word]:
            continue
        chosen.append(word)
        if len(chosen) >= cap:
            break
        digits = (word // powers) % q
        forbidden[((digits + pats) % q) @ powers] = True
    return _index_to_words(np.asarray(chosen, dtype=np.int64), q, n)


def _greedy_sampled(q: int, n: int, d: int, rng, cap: int, patience: int) -> np.ndarray:
    words = np.empty((0, n), dtype=np.int64)
    misses = 0
    while words.shape[0] < cap and misses < patience:
        cand = rng.integers(q, size=(256, n))
        for w in cand:
            if words.shape[0] == 0 or np.count_nonzero(words != w, axis=1).min() >= d:
                words = np.vstack([words, w])
                misses = 0
                if words.shape[0] >= cap:
                    break
            else:
                misses += 1
    return words


def build_distance_code(alphabet_size: int, n: int, alpha: float, rng: np.random.Generator | None = None,
                        order: str = "random", max_size: int | None = None) -> DistanceCode:
    """Greedy code with pairwise Hamming distance at least ``ceil(alpha n)``.

    Small spaces (at most ``2**22`` words) are scanned in lexicographic or
    seeded-random order.  Larger spaces are filled by rejection sampling up to
    ``max_size`` words (4096 by default).
    """
    q = int(alphabet_size)
    if q < 2 or n < 1:
        raise DomainError("need alphabet size >= 2 and n >= 1")
    if not (1.0 / n - 1e-12 <= alpha <= 0.5 + 1e-12):
        raise DomainError(f"alpha must lie in [1/n, 1/2], got {alpha}")
    if order not in ("random", "lex"):
        raise DomainError("order must be 'random' or 'lex'")
    d = max(1, math.ceil(alpha * n - 1e-9))
    space = q ** n
    enumerable = space <= ENUMERATION_LIMIT
    cap = max_size if max_size is not None else (space if enumerable else 4096)
    if rng is None:
        if order == "random" or not enumerable:
            raise DomainError("a random stream is required for random-order or sampled construction")
    if enumerable:
        if order == "lex":
            ordering = np.arange(space, dtype=np.int64)
        else:
            ordering = rng.permutation(space)
        if d <= 1:
            words = _index_to_words(np.sort(ordering[:cap]) if order == "lex" else ordering[:cap], q, n)
        else:
            words = _greedy_enumerated(q, n, d, ordering, cap)
    else:
        words = _greedy_sampled(q, n, d, rng, cap, patience=20 * cap)
    mind = pairwise_min_distance(words, q) if words.shape[0] <= 4096 else d
    if words.shape[0] <= 4096 and mind < d:
        raise ConstructionError(f"internal error: distance {mind} < {d}")
    lb = gv_log2_bound(q, n, alpha)
    need = cap if lb >= math.log2(cap) else 2.0 ** lb
    if words.shape[0] < need:
        raise ConstructionError(
            f"greedy code has {words.shape[0]} words, below the guaranteed {need:.3g}",
            best=words.shape[0],
        )
    words.setflags(write=False)
    return DistanceCode(words, float(alpha), q, mind)
