"""Keyless authentication over noisy channels.

Simulation of a multi-round protocol that authenticates a source state using
a noiseless channel plus a discrete memoryless channel ``W1``, against an
adversary who controls the noiseless channel and owns a channel ``W2``.  Also
included: a one-flow scheme built on minimum-distance codes, executable attacks
and the closed-form bounds they are checked against.
"""
from __future__ import annotations

from .channel import (DMC, EmpiricalType, HullDistanceResult, binary_entropy, capacity, choose_anchor,
                      empirical_type, entropy, gamma, hull_distance, is_cond_typical, is_nonredundant,
                      is_typical, sample, statistical_distance, theta)
from .errors import (ConstructionError, DomainError, InfeasibleError, ProtocolError, ScheduleError)

__version__ = "0.1.0"

__all__ = [
    "DMC", "EmpiricalType", "HullDistanceResult", "binary_entropy", "capacity", "choose_anchor",
    "empirical_type", "entropy", "gamma", "hull_distance", "is_cond_typical", "is_nonredundant",
    "is_typical", "sample", "statistical_distance", "theta",
    "ConstructionError", "DomainError", "InfeasibleError", "ProtocolError", "ScheduleError",
]
