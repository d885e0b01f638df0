"""Crowding-based survivor selection.

Parents are paired with their most-similar offspring, then each pair
resolves to one survivor: deterministically by lower RMSE in the
conventional mode, or stochastically with probability q1 / (q1 + q2) in
the evidence-driven mode.  The stochastic rule is evaluated from log q
values so arbitrarily large evidence gaps cannot overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expressions import EquationGenome, distance

_LOG_Q_CLAMP = 700.0


@dataclass
class FitnessRecord:
    """Per-genome fitness: RMSE fit, log evidence ratio, and metadata."""

    rmse: float
    log_q: float
    valid: bool
    complexity: int
    theta_star: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def invalid(cls, complexity: int = 0) -> "FitnessRecord":
        return cls(rmse=math.inf, log_q=-math.inf, valid=False, complexity=complexity)

    @property
    def q(self) -> float:
        """q(gamma), clamped into exp-representable range."""
        if self.log_q == -math.inf:
            return 0.0
        return math.exp(min(max(self.log_q, -_LOG_Q_CLAMP), _LOG_Q_CLAMP))


def crowding_pairing(
    parents: tuple[EquationGenome, EquationGenome],
    children: tuple[EquationGenome, EquationGenome],
) -> tuple[int, int]:
    """Index of the child paired with each parent (child_of_a, child_of_b).

    Of the two possible pairings the one with the smaller total distance
    wins; ties keep the identity pairing.
    """
    pa, pb = parents
    ca, cb = children
    straight = distance(pa, ca) + distance(pb, cb)
    crossed = distance(pa, cb) + distance(pb, ca)
    return (0, 1) if straight <= crossed else (1, 0)


def pair_offspring(
    parents: tuple[EquationGenome, EquationGenome],
    children: tuple[EquationGenome, EquationGenome],
) -> tuple[tuple[EquationGenome, EquationGenome], tuple[EquationGenome, EquationGenome]]:
    """Pair each parent with its most-similar child."""
    ia, ib = crowding_pairing(parents, children)
    return (parents[0], children[ia]), (parents[1], children[ib])


def deterministic_replacement(pair: tuple[FitnessRecord, FitnessRecord]) -> int:
    """Survivor index by RMSE; ties keep the incumbent (index 0)."""
    incumbent, challenger = pair
    return 1 if challenger.rmse < incumbent.rmse else 0


def replacement_probability(log_q1: float, log_q2: float) -> float:
    """P(first survives) = q1 / (q1 + q2), computed stably from logs."""
    if log_q1 == -math.inf and log_q2 == -math.inf:
        return 0.5
    d = log_q2 - log_q1
    if d >= 0:
        e = math.exp(-d) if d < _LOG_Q_CLAMP else 0.0
        return e / (1.0 + e)
    e = math.exp(d) if d > -_LOG_Q_CLAMP else 0.0
    return 1.0 / (1.0 + e)


def probabilistic_replacement(pair: tuple[FitnessRecord, FitnessRecord], rng) -> int:
    """Survivor index drawn with probability q1 / (q1 + q2) for index 0.

    Both-zero evidence (two invalid genomes) degrades to a fair coin so
    population size is preserved without bias.
    """
    p_first = replacement_probability(pair[0].log_q, pair[1].log_q)
    return 0 if rng.random() < p_first else 1
