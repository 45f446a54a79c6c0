"""Closed-form probability bounds used as Monte Carlo reference values."""
from __future__ import annotations

import math

from .errors import DomainError
from .setsys import log_star


def type1_bound(eps: float, code_error: float = 0.0) -> float:
    """Substitution success bound: ``6 eps`` plus the decoding error."""
    return 6.0 * eps + code_error


def type1_level_bound(phi: int, j: int, eps: float) -> float:
    """Bound for a substitution first caught at level ``j``: ``2^{-(phi-j)/4} eps``."""
    return 2.0 ** (-0.25 * (phi - j)) * eps


def type1_sum_bound(phi: int, eps: float) -> float:
    return sum(type1_level_bound(phi, j, eps) for j in range(1, phi))


def impersonation_bound(k: int, gamma: float, out_size: int) -> float:
    """``2 exp(-k gamma^2 / (8 |Z|^2))``: chance a forged prefix passes the type test."""
    return 2.0 * math.exp(-k * gamma ** 2 / (8.0 * out_size ** 2))


def anchor_check_bound(k: int, gamma: float, out_size: int) -> float:
    """Hoeffding bound on an honest prefix failing the radius ``gamma/(2|Z|)`` test.

    Each of the ``|Z|`` frequencies deviates by more than ``t = gamma/(2|Z|)``
    with probability at most ``2 exp(-2 k t^2)``.
    """
    t = gamma / (2.0 * out_size)
    return min(1.0, 2.0 * out_size * math.exp(-2.0 * k * t * t))


def typicality_failure_bound(n: int, eps: float, alphabet_size: int) -> float:
    """Hoeffding surrogate: ``P(not typical) <= 2|Z| exp(-2 n (eps/|Z|)^2)``."""
    return min(1.0, 2.0 * alphabet_size * math.exp(-2.0 * n * (eps / alphabet_size) ** 2))


def cond_typicality_failure_bound(n: int, eps: float, in_size: int, out_size: int) -> float:
    """Union/Hoeffding bound for a conditional-typicality test over a fixed input word.

    Cell ``(a, b)`` uses only the ``n_a`` positions carrying ``a``; its
    deviation ``|N_ab - n_a W(b|a)| / n`` exceeds ``eps/(|X||Y|)`` with
    probability at most ``2 exp(-2 n^2 t^2 / n_a) <= 2 exp(-2 n t^2)``.
    """
    t = eps / (in_size * out_size)
    return min(1.0, 2.0 * in_size * out_size * math.exp(-2.0 * n * t * t))


def cross_typicality_bound(n: int, alpha: float, theta: float, eps: float, in_size: int, out_size: int) -> float:
    """``2^{-2n(alpha Theta - eps)^2 / (|X|^2 |Y|^2)}`` for ``eps < alpha Theta``."""
    if eps >= alpha * theta:
        return 1.0
    return 2.0 ** (-2.0 * n * (alpha * theta - eps) ** 2 / (in_size ** 2 * out_size ** 2))


def ni_substitution_bound(n: int, alpha: float, theta: float, in_size: int, out_size: int) -> float:
    """``2^{-n alpha^2 Theta^2 / (2 |X|^2 |Z|^2)}``."""
    return 2.0 ** (-n * alpha ** 2 * theta ** 2 / (2.0 * in_size ** 2 * out_size ** 2))


def hull_radius_bound(out_size: int, eps1: float, eps2: float, n: int) -> float:
    """If outputs are eps1-close in type with probability above eps2, the hull
    distance is at most ``|Z| eps1 + |Z| sqrt(ln(2/eps2) / (2n))``."""
    if not 0 < eps2 <= 1:
        raise DomainError("eps2 must lie in (0, 1]")
    return out_size * eps1 + out_size * math.sqrt(math.log(2.0 / eps2) / (2.0 * n))


def success_lower_bound(H_F: float, delta: float, source_size: int | float) -> float:
    """Replay-attack floor ``max(0, 2^{-H(F)} - delta - 1/|S|)``."""
    if H_F < 0:
        raise DomainError("entropy must be non-negative")
    if not 0 <= delta <= 1:
        raise DomainError("delta must lie in [0, 1]")
    inv = 0.0 if math.isinf(source_size) else 1.0 / source_size
    return max(0.0, 2.0 ** (-H_F) - delta - inv)


def log_star_pow2(log2_size: float) -> int:
    """``log_star(2**L)`` without forming the number: ``1 + log_star(L)`` for ``L >= 1``."""
    if log2_size < 1:
        return 0
    return 1 + log_star(log2_size)


def round_lower_bound_raw(source_size_log2: float, n: int) -> int:
    if n < 1:
        raise DomainError("n must be positive")
    return log_star_pow2(source_size_log2) - log_star(n) - 5


def round_lower_bound(source_size_log2: float, n: int) -> int:
    """``max(0, log*|S| - log* n - 5)``; see :func:`round_lower_bound_raw`."""
    return max(0, round_lower_bound_raw(source_size_log2, n))


def round_upper_bound(v1_log2: float, n: int) -> int:
    """``log* v1 - log* n + 4``."""
    return log_star_pow2(v1_log2) - log_star(n) + 4
