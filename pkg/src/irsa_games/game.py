"""Utilities and an executable Nash-equilibrium test for symmetric profiles.

A candidate mixed strategy passes when (1) every pure strategy in its
support earns the same utility against the rest of the population playing
the candidate, and (2) no pure strategy outside the support earns more.
Pure deviations suffice: a mixed deviation's utility is a convex
combination of pure-deviation utilities, so it can never beat the best
pure one. Only symmetric equilibria are checked here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .core import (
    DegreeDistribution,
    GameConfig,
    Mixed,
    Pure,
    RewardScheme,
    StrategyProfile,
    ValidationError,
    as_stream,
)
from .frame_sim import estimate_success_probs, exact_success_probabilities

__all__ = [
    "NEReport",
    "pure_utility",
    "mixed_utility",
    "esu_two_user",
    "two_user_success_prob",
    "check_nash",
    "two_user_exact_oracle",
    "monte_carlo_oracle",
    "enumeration_oracle",
]

# oracle(d) -> utility or (utility, std_error)
UtilityOracle = Callable[[int], Union[float, tuple[float, float]]]


@dataclass(frozen=True)
class NEReport:
    """Outcome of testing a candidate distribution against both conditions.

    ``worst_deviation`` is (degree, gain) for the most profitable
    out-of-support pure deviation, where the gain is measured against the
    weakest support utility; None when the support covers every degree
    checked. Standard errors are zero for exact oracles.
    """

    is_ne: bool
    support_utilities: dict[int, float]
    max_equality_residual: float
    worst_deviation: tuple[int, float] | None
    tolerance: float
    support_std_errors: dict[int, float]
    deviation_utilities: dict[int, float]
    deviation_std_errors: dict[int, float]


def pure_utility(p_s: float, degree: int, scheme: RewardScheme, cost: float) -> float:
    """Reward times success probability minus the repetition cost d*c."""
    if not 0.0 <= p_s <= 1.0:
        raise ValidationError(f"success probability {p_s} outside [0, 1]")
    if degree < 1:
        raise ValidationError("degree must be at least 1")
    return scheme.reward(degree) * p_s - degree * cost


def mixed_utility(dist: DegreeDistribution, utilities: Mapping[int, float]) -> float:
    """Convex combination of pure-strategy utilities over the support."""
    total = 0.0
    for d, prob in dist.items():
        if d not in utilities:
            raise ValidationError(f"no utility supplied for support degree {d}")
        total += prob * utilities[d]
    return total


def esu_two_user(i: int, j: int, slots: int) -> float:
    """Expected successful users in the two-user game with perfect SIC.

    Both users succeed unless their replica sets coincide, which needs
    equal degrees and happens with probability 1/C(slots, i).
    """
    if not (1 <= i <= slots and 1 <= j <= slots):
        raise ValidationError("degrees must lie in 1..slots")
    if i != j:
        return 2.0
    return 2.0 * (1.0 - 1.0 / math.comb(slots, i))


def two_user_success_prob(degree: int, opponent: DegreeDistribution, slots: int) -> float:
    """Success probability of a pure strategy against a mixed opponent (p=1)."""
    return 1.0 - opponent.prob(degree) / math.comb(slots, degree)


def _oracle_value(raw) -> tuple[float, float]:
    if isinstance(raw, tuple):
        u, se = raw
        return float(u), float(se)
    return float(raw), 0.0


def check_nash(config: GameConfig, candidate: DegreeDistribution,
               scheme: RewardScheme | None = None,
               utility_oracle: UtilityOracle | None = None,
               epsilon: float | str = 1e-9,
               deviation_d_max: int | None = None,
               frames: int = 100_000,
               seed=0) -> NEReport:
    """Evaluate both equilibrium conditions for a symmetric candidate.

    The oracle supplies the utility of deviating to each pure degree while
    everyone else plays the candidate; if omitted, a Monte Carlo oracle is
    built from (config, scheme, frames, seed). Deviations are checked over
    1..deviation_d_max, which defaults to the frame length.

    For stochastic oracles, epsilon must dominate 3x the largest reported
    standard error (pass epsilon="auto" to use exactly that floor), and
    each comparison additionally absorbs 3x the combined standard error of
    the two utilities involved, so noise cannot flip the verdict.
    """
    scheme = scheme if scheme is not None else config.rewards
    d_max = config.slots if deviation_d_max is None else int(deviation_d_max)
    if not 1 <= d_max <= config.slots:
        raise ValidationError("deviation space must lie within 1..slots")
    if max(candidate.support) > d_max:
        raise ValidationError("candidate support exceeds the deviation space")
    if utility_oracle is None:
        utility_oracle = monte_carlo_oracle(config, candidate, scheme, frames, seed)

    utilities: dict[int, float] = {}
    errors: dict[int, float] = {}
    for d in range(1, d_max + 1):
        utilities[d], errors[d] = _oracle_value(utility_oracle(d))

    max_se = max(errors.values())
    if epsilon == "auto":
        epsilon = 3.0 * max_se if max_se > 0 else 1e-9
    epsilon = float(epsilon)
    if max_se > 0 and epsilon < 3.0 * max_se:
        raise ValidationError(
            f"tolerance {epsilon:g} is below the oracle noise floor "
            f"3*max(std_error) = {3.0 * max_se:g}; increase epsilon or frames")

    support = [d for d in candidate.support]
    out_of_support = [d for d in range(1, d_max + 1) if d not in candidate.support]

    max_residual = 0.0
    equality_ok = True
    for a in support:
        for b in support:
            if a >= b:
                continue
            residual = abs(utilities[a] - utilities[b])
            max_residual = max(max_residual, residual)
            allowance = epsilon + 3.0 * math.hypot(errors[a], errors[b])
            if residual > allowance:
                equality_ok = False

    weakest = min(support, key=lambda d: utilities[d])
    worst_deviation = None
    deviation_ok = True
    for b in out_of_support:
        gain = utilities[b] - utilities[weakest]
        if worst_deviation is None or gain > worst_deviation[1]:
            worst_deviation = (b, gain)
        allowance = epsilon + 3.0 * math.hypot(errors[b], errors[weakest])
        if gain > allowance:
            deviation_ok = False

    return NEReport(
        is_ne=equality_ok and deviation_ok,
        support_utilities={d: utilities[d] for d in support},
        max_equality_residual=max_residual,
        worst_deviation=worst_deviation,
        tolerance=epsilon,
        support_std_errors={d: errors[d] for d in support},
        deviation_utilities={d: utilities[d] for d in out_of_support},
        deviation_std_errors={d: errors[d] for d in out_of_support},
    )


# ---------------------------------------------------------------------------
# Oracle builders
# ---------------------------------------------------------------------------

def two_user_exact_oracle(candidate: DegreeDistribution, slots: int,
                          scheme: RewardScheme, cost: float) -> UtilityOracle:
    """Closed-form deviation utilities for the two-user game without erasures."""

    def oracle(d: int):
        p_s = two_user_success_prob(d, candidate, slots)
        return pure_utility(p_s, d, scheme, cost)

    return oracle


def monte_carlo_oracle(config: GameConfig, candidate: DegreeDistribution,
                       scheme: RewardScheme, frames: int, seed) -> UtilityOracle:
    """Deviation utilities from simulation: one deviant among conformists.

    Each degree gets its own child stream, so utilities are reproducible
    and independent across degrees.
    """
    if config.users < 1:
        raise ValidationError("need at least one user")
    stream = as_stream(seed)

    def oracle(d: int):
        profile = StrategyProfile(
            (Pure(d),) + (Mixed(candidate),) * (config.users - 1))
        est = estimate_success_probs(config, profile, frames, stream.child(d))
        p_hat = float(est.probs[0])
        se = float(est.std_errors[0])
        return pure_utility(p_hat, d, scheme, config.cost), scheme.reward(d) * se

    return oracle


def enumeration_oracle(config: GameConfig, candidate: DegreeDistribution,
                       scheme: RewardScheme,
                       budget: float | None = None) -> UtilityOracle:
    """Exact deviation utilities by placement enumeration (small instances)."""

    def oracle(d: int):
        profile = StrategyProfile(
            (Pure(d),) + (Mixed(candidate),) * (config.users - 1))
        kwargs = {} if budget is None else {"budget": budget}
        probs = exact_success_probabilities(config, profile, **kwargs)
        return pure_utility(float(probs[0]), d, scheme, config.cost)

    return oracle
