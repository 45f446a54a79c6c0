"""Discrete memoryless channels, empirical types, typicality and hull distances.

Alphabets are index based: a channel with ``p`` inputs and ``q`` outputs maps
symbols ``0..p-1`` to ``0..q-1``.  Distributions are plain 1-D float arrays.
All entropies and capacities are in bits, and statistical distance follows the
unhalved convention ``sum |P - Q|`` (range ``[0, 2]``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, InfeasibleError

PROB_TOL = 1e-9
LP_TOL = 1e-7

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def as_distribution(p, size: int | None = None) -> np.ndarray:
    """Validate ``p`` as a probability vector and return it as a float array."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("a distribution must be a non-empty 1-D vector")
    if size is not None and arr.size != size:
        raise DomainError(f"alphabet mismatch: expected {size} entries, got {arr.size}")
    if np.any(arr < -PROB_TOL) or np.any(arr > 1 + PROB_TOL):
        raise DomainError("probabilities must lie in [0, 1]")
    if abs(arr.sum() - 1.0) > PROB_TOL:
        raise DomainError(f"probabilities sum to {arr.sum()!r}, not 1")
    return arr


def _as_symbols(seq, alphabet_size: int) -> np.ndarray:
    arr = np.asarray(seq)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise DomainError("symbol sequences must hold integers")
    arr = arr.astype(np.intp, copy=False)
    if arr.size and (arr.min() < 0 or arr.max() >= alphabet_size):
        raise DomainError(f"symbol outside alphabet of size {alphabet_size}")
    return arr


@dataclass(frozen=True, eq=False)
class DMC:
    """A row-stochastic transition matrix ``W[x, y] = W(y|x)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DomainError("channel matrix must be 2-D with at least one row and column")
        for i, row in enumerate(m):
            try:
                as_distribution(row)
            except DomainError as exc:
                raise DomainError(f"row {i} is not a distribution: {exc}") from None
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def bsc(cls, p: float) -> "DMC":
        if not 0.0 <= p <= 1.0:
            raise DomainError("crossover probability must lie in [0, 1]")
        return cls([[1.0 - p, p], [p, 1.0 - p]])

    @classmethod
    def identity(cls, size: int) -> "DMC":
        return cls(np.eye(size))

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]

    def row(self, x: int) -> np.ndarray:
        if not 0 <= x < self.input_size:
            raise DomainError(f"input symbol {x} outside alphabet of size {self.input_size}")
        return self.matrix[x]

    @cached_property
    def log_matrix(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = np.log(self.matrix)
        out.setflags(write=False)
        return out

    @cached_property
    def _cdf(self) -> np.ndarray:
        return np.cumsum(self.matrix, axis=1)[:, :-1]

    def __eq__(self, other):
        if not isinstance(other, DMC):
            return NotImplemented
        return self.matrix.shape == other.matrix.shape and bool(np.all(self.matrix == other.matrix))

    __hash__ = None

    def __repr__(self):
        return f"DMC({self.matrix.tolist()!r})"

    # -- file format ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "output_size": self.output_size,
            "rows": self.matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DMC":
        try:
            rows = data["rows"]
            p, q = int(data["input_size"]), int(data["output_size"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed channel description: {exc}") from None
        m = np.asarray(rows, dtype=float)
        if m.shape != (p, q):
            raise DomainError(f"rows have shape {m.shape}, expected ({p}, {q})")
        return cls(m)

    @classmethod
    def load(cls, path) -> "DMC":
        with open(Path(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")


# -- empirical types -----------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalType:
    counts: tuple[int, ...]
    n: int

    @property
    def frequencies(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


def empirical_type(z, alphabet_size: int) -> EmpiricalType:
    z = _as_symbols(z, alphabet_size).ravel()
    if z.size == 0:
        raise DomainError("empirical type of an empty sequence is undefined")
    counts = np.bincount(z, minlength=alphabet_size)
    return EmpiricalType(tuple(int(c) for c in counts), int(z.size))


def statistical_distance(p, q) -> float:
    p = as_distribution(p)
    q = as_distribution(q, size=p.size)
    return float(np.abs(p - q).sum())


@dataclass(frozen=True)
class HullDistanceResult:
    distance: float
    weights: np.ndarray


def hull_distance(p, rows) -> HullDistanceResult:
    """Distance from ``p`` to the convex hull of ``rows``, solved as an LP.

    Variables are the mixing weights ``lam`` (one per row) and slacks ``t``
    (one per output symbol); minimise ``sum(t)`` subject to
    ``|p - lam @ rows| <= t`` elementwise and ``lam`` in the simplex.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] == 0:
        raise DomainError("hull of an empty row set")
    p = as_distribution(p, size=rows.shape[1])
    for row in rows:
        as_distribution(row)
    k, q = rows.shape
    if k == 1:
        w = np.ones(1)
        return HullDistanceResult(float(np.abs(p - rows[0]).sum()), w)

    eye = np.eye(q)
    c = np.concatenate([np.zeros(k), np.ones(q)])
    a_ub = np.block([[-rows.T, -eye], [rows.T, -eye]])
    b_ub = np.concatenate([-p, p])
    a_eq = np.concatenate([np.ones(k), np.zeros(q)])[None, :]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=(0, None), method="highs", options=_HIGHS_OPTIONS)
    if res.status != 0:
        raise RuntimeError(f"hull-distance LP failed: {res.message}")
    w = np.clip(res.x[:k], 0.0, None)
    w = w / w.sum()
    dist = float(np.abs(p - w @ rows).sum())
    return HullDistanceResult(dist, w)


def theta(W: DMC) -> float:
    """Smallest distance from a row of ``W`` to the hull of the other rows."""
    if W.input_size < 2:
        raise DomainError("theta needs at least two input symbols")
    m = W.matrix
    return min(
        hull_distance(m[i], np.delete(m, i, axis=0)).distance
        for i in range(W.input_size)
    )


def is_nonredundant(W: DMC) -> bool:
    return theta(W) > PROB_TOL


# -- sampling ------------------------------------------------------------------


def sample(W: DMC, x, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Pass ``x`` through ``W`` symbol by symbol.

    With ``size`` given, returns ``size`` independent output sequences stacked
    along a new leading axis.
    """
    x = _as_symbols(x, W.input_size)
    shape = x.shape if size is None else (size,) + x.shape
    u = rng.random(shape)
    return (u[..., None] >= W._cdf[x]).sum(axis=-1)


# -- typicality ----------------------------------------------------------------


def _counts(z: np.ndarray, alphabet_size: int) -> np.ndarray:
    # z has shape (m, n); returns (m, alphabet_size)
    return np.stack([(z == u).sum(axis=1) for u in range(alphabet_size)], axis=1)


def typical_mask(z, p, eps: float) -> np.ndarray:
    """Vectorised :func:`is_typical` over the rows of a 2-D array."""
    p = as_distribution(p)
    z = _as_symbols(z, p.size)
    z = np.atleast_2d(z)
    freq = _counts(z, p.size) / z.shape[1]
    ok = np.all(np.abs(freq - p) <= eps / p.size + PROB_TOL, axis=1)
    zero = p <= 0.0
    if zero.any():
        ok &= ~np.any(freq[:, zero] > 0, axis=1)
    return ok


def is_typical(z, p, eps: float) -> bool:
    """Per-symbol deviation at most ``eps/|Z|`` plus the zero-probability clause."""
    z = np.asarray(z)
    if z.size == 0:
        raise DomainError("typicality of an empty sequence is undefined")
    return bool(typical_mask(z.reshape(1, -1), p, eps)[0])


def cond_typical_mask(y, x, W: DMC, eps: float) -> np.ndarray:
    """Vectorised :func:`is_cond_typical`: each row of ``y`` against one ``x``."""
    x = _as_symbols(x, W.input_size).ravel()
    y = np.atleast_2d(_as_symbols(y, W.output_size))
    if y.shape[1] != x.size:
        raise DomainError(f"length mismatch: {y.shape[1]} outputs for {x.size} inputs")
    n = x.size
    p, q = W.input_size, W.output_size
    joint = np.zeros((y.shape[0], p, q))
    tx = np.zeros(p)
    for a in range(p):
        sel = x == a
        tx[a] = sel.sum() / n
        if sel.any():
            joint[:, a, :] = _counts(y[:, sel], q) / n
    dev = np.abs(joint - tx[:, None] * W.matrix)
    ok = np.all(dev <= eps / (p * q) + PROB_TOL, axis=(1, 2))
    forbidden = W.matrix <= 0.0
    if forbidden.any():
        ok &= ~np.any(joint[:, forbidden] > 0, axis=1)
    return ok


def is_cond_typical(y, x, W: DMC, eps: float) -> bool:
    y = np.asarray(y)
    x = np.asarray(x)
    if y.shape != x.shape:
        raise DomainError(f"length mismatch: {y.shape} vs {x.shape}")
    if y.size == 0:
        raise DomainError("typicality of an empty sequence is undefined")
    return bool(cond_typical_mask(y.reshape(1, -1), x, W, eps)[0])


# -- entropy and capacity ------------------------------------------------------


def binary_entropy(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("binary entropy needs alpha in [0, 1]")
    if alpha in (0.0, 1.0):
        return 0.0
    return -alpha * math.log2(alpha) - (1.0 - alpha) * math.log2(1.0 - alpha)


def entropy(p) -> float:
    p = as_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def blahut_arimoto(W: DMC, tol: float = 1e-9, max_iter: int = 100_000) -> tuple[float, np.ndarray]:
    """Capacity (bits) and a capacity-achieving input distribution.

    Iterates until the standard upper and lower capacity bounds are within
    ``tol`` of each other, so the returned value is within ``tol`` of capacity.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    m = W.matrix
    pos = m > 0
    log_m = np.where(pos, np.log2(np.where(pos, m, 1.0)), 0.0)
    r = np.full(W.input_size, 1.0 / W.input_size)
    lower = 0.0
    for _ in range(max_iter):
        out = r @ m
        log_out = np.log2(np.where(out > 0, out, 1.0))
        # relative entropy of each row against the current output law
        d = np.where(pos, m * (log_m - log_out[None, :]), 0.0).sum(axis=1)
        c = np.exp2(d)
        total = float(r @ c)
        lower = math.log2(total)
        upper = float(d.max())
        if upper - lower < tol:
            break
        r = r * c / total
    return max(lower, 0.0), r


def capacity(W: DMC, tol: float = 1e-9) -> float:
    return blahut_arimoto(W, tol)[0]


# -- anchor selection ----------------------------------------------------------


def gamma(W1: DMC, a: int, W2: DMC) -> float:
    if W1.output_size != W2.output_size:
        raise DomainError("W1 and W2 must share the output alphabet")
    return hull_distance(W1.row(a), W2.matrix).distance


def choose_anchor(W1: DMC, W2: DMC) -> tuple[int, float]:
    """Input symbol of ``W1`` farthest from the hull of ``W2``, with that distance."""
    values = [gamma(W1, a, W2) for a in range(W1.input_size)]
    best = max(values)
    if best <= PROB_TOL:
        raise InfeasibleError(
            "Cov(W1) is contained in Cov(W2): the adversary can imitate every "
            "row of W1, so no keyless authentication is possible"
        )
    a = next(i for i, g in enumerate(values) if g >= best - PROB_TOL)
    return a, values[a]


def imitation_map(W1: DMC, W2: DMC) -> np.ndarray:
    """For each input of ``W1``, the ``W2`` input whose row is closest to it."""
    if W1.output_size != W2.output_size:
        raise DomainError("W1 and W2 must share the output alphabet")
    d = np.abs(W1.matrix[:, None, :] - W2.matrix[None, :, :]).sum(axis=2)
    return d.argmin(axis=1)


def symbols_to_str(seq: Sequence[int]) -> str:
    seq = list(int(s) for s in seq)
    if all(s < 10 for s in seq):
        return "".join(str(s) for s in seq)
    return ",".join(str(s) for s in seq)
