"""Equilibrium constructions: two-user closed form, reward fitting for a
target distribution, and the support-constrained short-frame solver.

The two-user construction is exact algebra. The other two follow the same
recipe: measure (or enumerate) the success probability of a unilateral
deviant against a population of conformists, then solve the equal-utility
conditions — a linear system in the rewards when the distribution is
fixed, a nonlinear root-finding problem in the distribution when the
reward is fixed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import (
    ConstantReward,
    DegreeDistribution,
    GameConfig,
    Mixed,
    Pure,
    SolverError,
    StrategyProfile,
    ValidationError,
    as_stream,
    make_distribution,
)
from .frame_sim import (
    estimate_profile_throughput,
    estimate_success_probs,
    exact_success_probabilities,
)
from .game import NEReport, check_nash, esu_two_user

__all__ = [
    "RewardFit",
    "two_user_ne",
    "two_user_ne_throughput",
    "fit_rewards_for_ne",
    "short_frame_utility",
    "solve_short_frame_ne",
    "exact_composition_oracle",
    "compositions",
]

_AGREEMENT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Two-user closed form
# ---------------------------------------------------------------------------

def two_user_ne(slots: int) -> DegreeDistribution:
    """Symmetric mixed equilibrium of the two-user game without erasures.

    Built from the ratio recursion L_k = (M - (k-1))/k * L_{k-1} and
    normalized; cross-checked against the equivalent binomial form
    C(M, k) / (2**M - 1), which must agree to 1e-12.
    """
    if slots < 1:
        raise ValidationError("need at least one slot")
    weights = [1.0]
    for k in range(2, slots + 1):
        weights.append(weights[-1] * (slots - (k - 1)) / k)
    recursion = np.asarray(weights) / sum(weights)
    binomial = np.array([math.comb(slots, k) for k in range(1, slots + 1)],
                        dtype=float) / (2 ** slots - 1)
    if np.max(np.abs(recursion - binomial)) > _AGREEMENT_TOL:
        raise SolverError("recursion and binomial forms of the two-user NE disagree")
    return DegreeDistribution(recursion)


def two_user_ne_throughput(slots: int) -> float:
    """Expected successes per slot at the symmetric two-user equilibrium.

    Computed by averaging the expected-successful-users function over the
    joint degree distribution, then asserted against the closed form
    (2/M) * (1 - 1/(2**M - 1)).
    """
    dist = two_user_ne(slots)
    esu = 0.0
    for k, pk in dist.items():
        against_mixed = sum(pj * esu_two_user(k, j, slots) for j, pj in dist.items())
        esu += pk * against_mixed
    per_slot = esu / slots
    shortcut = (2.0 / slots) * (1.0 - 1.0 / (2 ** slots - 1))
    if abs(per_slot - shortcut) > _AGREEMENT_TOL:
        raise SolverError("ESU sum disagrees with the closed-form throughput")
    return per_slot


# ---------------------------------------------------------------------------
# Reward fitting: make a target distribution an equilibrium
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardFit:
    """Per-degree rewards that make a target distribution an equilibrium.

    support_rewards solve the equal-utility system for degrees inside the
    support; bounds are the largest rewards out-of-support degrees may
    receive without becoming profitable (math.inf when the degree never
    succeeds). p_s_estimates maps degree -> (estimate, std_error);
    mixed_success is the conformist's success probability. When the
    support is a single degree the equality system is vacuous
    (equality_vacuous=True) and the support reward is an arbitrary anchor.
    """

    support_rewards: dict[int, float]
    bounds: dict[int, float]
    r_infinity: float
    p_s_estimates: dict[int, tuple[float, float]]
    mixed_success: tuple[float, float]
    constant_reward_feasible: bool
    reward_std_errors: dict[int, float]
    condition_number: float
    equality_vacuous: bool


def _solve_reward_system(support: Sequence[int], weights: dict[int, float],
                         probs: dict[int, float], p_mixed: float,
                         cost: float, avg_deg: float) -> np.ndarray:
    """Solve r_d * p_d - d*c = r_inf * p_mix - c*avg_deg with r_inf = sum L_d r_d.

    The matrix is a rank-one update of a diagonal; it is singular exactly
    when all support probabilities coincide with the conformist one, in
    which case the system is consistent with a one-parameter family and
    lstsq returns the minimum-norm member.
    """
    k = len(support)
    a = np.zeros((k, k))
    b = np.zeros(k)
    for i, d in enumerate(support):
        for j, d2 in enumerate(support):
            a[i, j] = (probs[d] if i == j else 0.0) - weights[d2] * p_mixed
        b[i] = cost * (d - avg_deg)
    solution = np.linalg.lstsq(a, b, rcond=None)[0]
    misfit = float(np.linalg.norm(a @ solution - b))
    if misfit > 1e-6 * max(1.0, float(np.linalg.norm(b))):
        cond = float(np.linalg.cond(a))
        raise SolverError(
            f"reward system is inconsistent (condition number {cond:.3g}, "
            f"residual {misfit:.3g})")
    return solution


def fit_rewards_for_ne(target: DegreeDistribution, config: GameConfig,
                       frames: int = 100_000, seed=0,
                       reference_reward: float = 1.0,
                       bootstrap: int = 256) -> RewardFit:
    """Fit per-degree rewards so that ``target`` satisfies both NE conditions.

    Success probabilities come from Monte Carlo: for each degree d in
    1..d_max, one user deviates to the pure strategy d while the other
    users play ``target``; the conformist probability is measured with
    everyone playing ``target``. Standard errors on the fitted rewards are
    propagated by a seeded parametric bootstrap over the measured
    probabilities.
    """
    if config.users < 2:
        raise ValidationError("reward fitting needs at least two users")
    if target.d_max > config.slots:
        raise ValidationError("target d_max exceeds the frame length")
    stream = as_stream(seed)
    cost = config.cost
    avg_deg = target.average_degree()
    d_max = target.d_max
    support = list(target.support)

    probs: dict[int, float] = {}
    errors: dict[int, float] = {}
    for d in range(1, d_max + 1):
        profile = StrategyProfile((Pure(d),) + (Mixed(target),) * (config.users - 1))
        est = estimate_success_probs(config, profile, frames, stream.child(d))
        probs[d] = float(est.probs[0])
        errors[d] = float(est.std_errors[0])

    # conformist success probability, averaged over the symmetric population
    tp = estimate_profile_throughput(
        config, StrategyProfile.symmetric(Mixed(target), config.users),
        frames, stream.child(0))
    p_mixed = 1.0 - tp.plr
    se_mixed = tp.std_error * config.slots / config.users

    weights = {d: target.prob(d) for d in support}

    if len(support) == 1:
        anchor = support[0]
        support_rewards = {anchor: float(reference_reward)}
        r_inf = float(reference_reward)
        reward_errors = {anchor: 0.0}
        condition_number = math.inf
        vacuous = True
        feasible = True
    else:
        a_cond = np.zeros((len(support), len(support)))
        for i, d in enumerate(support):
            for j, d2 in enumerate(support):
                a_cond[i, j] = (probs[d] if i == j else 0.0) - weights[d2] * p_mixed
        condition_number = float(np.linalg.cond(a_cond))
        solution = _solve_reward_system(support, weights, probs, p_mixed, cost, avg_deg)
        support_rewards = {d: float(r) for d, r in zip(support, solution)}
        r_inf = float(sum(target.prob(d) * support_rewards[d] for d in support))
        vacuous = False

        # parametric bootstrap for the reward uncertainty
        boot_gen = as_stream(seed).child(10 ** 6).generator
        samples = []
        for _ in range(bootstrap):
            perturbed = {d: min(1.0, max(0.0, probs[d] + boot_gen.normal(0.0, errors[d])))
                         for d in support}
            pm = min(1.0, max(0.0, p_mixed + boot_gen.normal(0.0, se_mixed)))
            try:
                samples.append(_solve_reward_system(support, weights, perturbed,
                                                    pm, cost, avg_deg))
            except SolverError:
                continue
        if len(samples) >= 2:
            boot = np.asarray(samples)
            stds = boot.std(axis=0, ddof=1)
            reward_errors = {d: float(s) for d, s in zip(support, stds)}
            feasible = True
            for i in range(len(support)):
                for j in range(i + 1, len(support)):
                    diff_sd = float(np.std(boot[:, i] - boot[:, j], ddof=1))
                    gap = abs(support_rewards[support[i]] - support_rewards[support[j]])
                    if gap > 3.0 * diff_sd:
                        feasible = False
        else:
            reward_errors = {d: math.nan for d in support}
            feasible = False

    bounds = {}
    for d in range(1, d_max + 1):
        if d in target.support:
            continue
        mixed_util = r_inf * p_mixed - cost * avg_deg
        if probs[d] <= 0.0:
            bounds[d] = math.inf
        else:
            bounds[d] = (mixed_util + d * cost) / probs[d]

    return RewardFit(
        support_rewards=support_rewards,
        bounds=bounds,
        r_infinity=r_inf,
        p_s_estimates={d: (probs[d], errors[d]) for d in range(1, d_max + 1)},
        mixed_success=(p_mixed, se_mixed),
        constant_reward_feasible=feasible,
        reward_std_errors=reward_errors,
        condition_number=condition_number,
        equality_vacuous=vacuous,
    )


# ---------------------------------------------------------------------------
# Short-frame solver
# ---------------------------------------------------------------------------

def compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def exact_composition_oracle(config: GameConfig, budget: float | None = None
                             ) -> Callable[[int, tuple[int, ...]], float]:
    """Exact success probability of a deviant against a fixed composition.

    oracle(d, counts) returns p_s for one user at Pure(d) when counts[t-1]
    other users transmit t repetitions. Results are cached: the table does
    not depend on the mixture weights, only on the composition.
    """
    cache: dict[tuple, float] = {}

    def oracle(d: int, counts: tuple[int, ...]) -> float:
        key = (d, tuple(counts))
        if key not in cache:
            others = []
            for t, k in enumerate(counts, start=1):
                others.extend([Pure(t)] * k)
            profile = StrategyProfile((Pure(d),) + tuple(others))
            kwargs = {} if budget is None else {"budget": budget}
            probs = exact_success_probabilities(config, profile, **kwargs)
            cache[key] = float(probs[0])
        return cache[key]

    return oracle


def _composition_weight(counts: Sequence[int], probs: Sequence[float]) -> float:
    n = sum(counts)
    weight = float(math.factorial(n))
    for k, p in zip(counts, probs):
        if k:
            if p == 0.0:
                return 0.0
            weight *= p ** k / math.factorial(k)
        # k == 0 contributes factor 1 regardless of p
    return weight


def _utility_on_raw(d: int, raw_probs: np.ndarray, config: GameConfig,
                    success_oracle, reward: float) -> float:
    """Deviant utility for a raw (possibly off-simplex) mixture vector."""
    n_others = config.users - 1
    d_len = raw_probs.size
    active = [t for t in range(d_len) if raw_probs[t] != 0.0]
    total = 0.0
    for combo in compositions(n_others, len(active)):
        counts = [0] * d_len
        for idx, k in zip(active, combo):
            counts[idx] = k
        weight = _composition_weight(counts, raw_probs)
        if weight == 0.0:
            continue
        p_s = success_oracle(d, tuple(counts))
        total += weight * (reward * p_s - d * config.cost)
    return total


def short_frame_utility(d: int, dist: DegreeDistribution, config: GameConfig,
                        success_oracle) -> float:
    """Deviant utility u([d, s_-i]) summed over all compositions of the
    other users' pure degrees, weighted multinomially by ``dist``."""
    if config.users < 1:
        raise ValidationError("need at least one user")
    reward = config.rewards.reward(d)
    return _utility_on_raw(d, np.asarray(dist.probs, dtype=float), config,
                           success_oracle, reward)


def _damped_newton(residual_fn, x0: np.ndarray, tol: float = 1e-11,
                   max_iter: int = 60, fd_step: float = 1e-6):
    """Damped Newton with a central-difference Jacobian. Returns (x, ok)."""
    x = x0.copy()
    f = residual_fn(x)
    norm = float(np.linalg.norm(f))
    for _ in range(max_iter):
        if norm < tol:
            return x, True
        n = x.size
        jac = np.zeros((n, n))
        for j in range(n):
            step = np.zeros(n)
            step[j] = fd_step
            jac[:, j] = (residual_fn(x + step) - residual_fn(x - step)) / (2 * fd_step)
        try:
            delta = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return x, False
        damping = 1.0
        improved = False
        for _ in range(40):
            trial = x + damping * delta
            f_trial = residual_fn(trial)
            trial_norm = float(np.linalg.norm(f_trial))
            if trial_norm < norm:
                x, f, norm = trial, f_trial, trial_norm
                improved = True
                break
            damping *= 0.5
        if not improved:
            return x, False
    return x, norm < tol


def solve_short_frame_ne(support: Sequence[int], config: GameConfig,
                         reward: float,
                         success_oracle=None,
                         deviation_d_max: int | None = None,
                         epsilon: float = 1e-6,
                         budget: float | None = None
                         ) -> tuple[DegreeDistribution, NEReport]:
    """Solve the equal-utility system on a fixed support, then verify.

    Finds the mixture over ``support`` for which every supported pure
    strategy earns the same utility under a constant reward, starting from
    the uniform mixture (damped Newton, Nelder-Mead fallback). The
    returned report also checks out-of-support deviations; a solution that
    fails that check is still returned, with is_ne=False.
    """
    support = sorted(set(int(d) for d in support))
    if not support:
        raise ValidationError("support must be non-empty")
    if support[0] < 1 or support[-1] > config.slots:
        raise ValidationError("support must lie within 1..slots")
    if config.users < 1:
        raise ValidationError("need at least one user")
    cfg = config.with_reward(ConstantReward(float(reward)))
    if success_oracle is None:
        success_oracle = exact_composition_oracle(
            cfg, budget) if budget is not None else exact_composition_oracle(cfg)

    d_len = support[-1]
    k = len(support)

    def expand(x: np.ndarray) -> np.ndarray:
        raw = np.zeros(d_len)
        for idx, d in enumerate(support):
            raw[d - 1] = x[idx]
        return raw

    if k == 1:
        solution = np.ones(1)
    else:
        def residual(x: np.ndarray) -> np.ndarray:
            raw = expand(x)
            utils = [_utility_on_raw(d, raw, cfg, success_oracle, float(reward))
                     for d in support]
            res = [utils[i] - utils[0] for i in range(1, k)]
            res.append(float(np.sum(x)) - 1.0)
            return np.asarray(res)

        x0 = np.full(k, 1.0 / k)
        solution, ok = _damped_newton(residual, x0)
        if not ok:
            fallback = minimize(lambda x: float(np.sum(residual(x) ** 2)), x0,
                                method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-18,
                                         "maxiter": 20_000})
            solution = fallback.x
            if float(np.linalg.norm(residual(solution))) > 1e-8:
                raise SolverError(
                    f"no equal-utility root found for support {support}")
        if np.any(solution < -1e-9):
            raise SolverError(
                f"support {support} is infeasible: solved mixture "
                f"{solution} leaves the simplex")
        solution = np.clip(solution, 0.0, None)

    dist = make_distribution(expand(solution))

    def report_oracle(d: int) -> float:
        return _utility_on_raw(d, np.asarray(dist.probs, dtype=float), cfg,
                               success_oracle, float(reward))

    report = check_nash(cfg, dist, cfg.rewards, report_oracle,
                        epsilon=epsilon, deviation_d_max=deviation_d_max)
    return dist, report
