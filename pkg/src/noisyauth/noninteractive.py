"""One-flow authentication with a minimum-distance code.

Alice sends ``a^k | C_s`` over ``W1`` and ``s`` over the noiseless channel.
Bob accepts the received ``s'`` when the prefix is typical for ``W1(.|a)`` and
the rest is conditionally typical given ``C_{s'}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (DMC, PROB_TOL, binary_entropy, choose_anchor, cond_typical_mask, is_cond_typical,
                      is_typical, theta, typical_mask)
from .codes import DistanceCode, build_distance_code, gv_log2_bound
from .errors import DomainError, InfeasibleError
from .setauth import Accept, Reject, ceil_sqrt


@dataclass(frozen=True, eq=False)
class NiScheme:
    W1: DMC
    W2: DMC
    code: DistanceCode
    anchor: int
    xi: float
    theta: float
    eps: float
    k: int

    @property
    def n(self) -> int:
        return self.code.n

    @property
    def alpha(self) -> float:
        return self.code.alpha

    @property
    def size(self) -> int:
        return self.code.size

    @property
    def n_total(self) -> int:
        return self.k + self.n


def default_eps(xi: float, theta_: float, alpha: float, out_size: int) -> float:
    return min(xi / (4.0 * out_size), alpha * theta_ / 2.0)


def ni_setup(W1: DMC, W2: DMC, n: int, alpha: float, rng: np.random.Generator | None,
             eps_override: float | None = None, order: str = "random", max_size: int | None = None) -> NiScheme:
    th = theta(W1)
    if th <= PROB_TOL:
        raise InfeasibleError("W1 is redundant (some row lies in the hull of the others)")
    a, xi = choose_anchor(W1, W2)
    code = build_distance_code(W1.input_size, n, alpha, rng=rng, order=order, max_size=max_size)
    eps = default_eps(xi, th, alpha, W1.output_size) if eps_override is None else float(eps_override)
    if eps <= 0:
        raise DomainError("eps must be positive")
    return NiScheme(W1, W2, code, a, xi, th, eps, ceil_sqrt(n))


def ni_send(scheme: NiScheme, s: int) -> tuple[np.ndarray, int]:
    if not 0 <= s < scheme.size:
        raise DomainError(f"source state {s} outside [0, {scheme.size})")
    prefix = np.full(scheme.k, scheme.anchor, dtype=np.int64)
    return np.concatenate([prefix, scheme.code.codeword(s)]), int(s)


def ni_verify(scheme: NiScheme, z, s_received: int):
    z = np.asarray(z)
    if z.ndim != 1 or z.size != scheme.n_total:
        raise DomainError(f"expected {scheme.n_total} channel outputs, got {z.size}")
    if not 0 <= s_received < scheme.size:
        return Reject()
    k = scheme.k
    if not is_typical(z[:k], scheme.W1.row(scheme.anchor), scheme.eps):
        return Reject()
    if not is_cond_typical(z[k:], scheme.code.codeword(s_received), scheme.W1, scheme.eps):
        return Reject()
    return Accept(int(s_received))


def ni_verify_batch(scheme: NiScheme, Z, s_received: int) -> np.ndarray:
    """Acceptance mask for many received words against the same claimed ``s'``."""
    Z = np.atleast_2d(np.asarray(Z))
    if Z.shape[1] != scheme.n_total:
        raise DomainError(f"expected {scheme.n_total} channel outputs, got {Z.shape[1]}")
    if not 0 <= s_received < scheme.size:
        return np.zeros(Z.shape[0], dtype=bool)
    k = scheme.k
    ok = typical_mask(Z[:, :k], scheme.W1.row(scheme.anchor), scheme.eps)
    ok &= cond_typical_mask(Z[:, k:], scheme.code.codeword(s_received), scheme.W1, scheme.eps)
    return ok


@dataclass(frozen=True)
class NiRate:
    rate: float
    floor_rate: float
    asymptotic_rate: float


def ni_rate(scheme: NiScheme) -> NiRate:
    """Measured rate ``log2 N / (n + k)`` with the guaranteed floor and the large-n limit."""
    q = scheme.W1.input_size
    n, k, alpha = scheme.n, scheme.k, scheme.alpha
    rate = math.log2(scheme.size) / (n + k)
    floor = max(0.0, gv_log2_bound(q, n, alpha)) / (n + k)
    lq = math.log2(q)
    asym = (1.0 - alpha - binary_entropy(alpha) / lq) * lq
    return NiRate(rate, floor, asym)


def min_distance_pair(code: DistanceCode) -> tuple[int, int]:
    """Indices of a pair of codewords at the code's minimum distance."""
    cb = code.codebook
    best, pair = None, (0, 1)
    for i in range(cb.shape[0] - 1):
        d = np.count_nonzero(cb[i + 1:] != cb[i], axis=1)
        j = int(np.argmin(d))
        if best is None or d[j] < best:
            best, pair = int(d[j]), (i, i + 1 + j)
            if best == code.min_distance:
                break
    return pair
