"""Iterative best reply over simulated frames.

Everyone starts at one repetition (framed ALOHA). Users are visited in
turn; the visited user tries every candidate degree against the frozen
rest of the population, estimating its utility over a batch of simulated
frames, and switches to the best candidate only if the improvement clears
a noise-aware threshold. The process stops after a full pass with no
changes. Individual users always hold pure strategies; the reported
distribution is the population split.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    ConstantReward,
    DegreeDistribution,
    GameConfig,
    Pure,
    StrategyProfile,
    ValidationError,
    as_stream,
    get_worker_cap,
    make_distribution,
)
from .frame_sim import ThroughputEstimate, estimate_profile_throughput

__all__ = ["BestReplyState", "SweepRow", "best_reply_dynamics", "sweep_rewards"]


@dataclass(frozen=True)
class UpdateRecord:
    """One accepted strategy change."""

    pass_index: int
    user: int
    old_degree: int
    new_degree: int
    old_utility: float
    new_utility: float
    threshold: float


@dataclass(frozen=True)
class BestReplyState:
    pure_strategies: np.ndarray
    pass_index: int
    converged: bool
    empirical_distribution: DegreeDistribution
    utility_trace: list[float]
    updates: list[UpdateRecord]

    def profile(self) -> StrategyProfile:
        return StrategyProfile(tuple(Pure(int(d)) for d in self.pure_strategies))


def _candidate_success_matrix(degrees: np.ndarray, user: int, cand_max: int,
                              slots: int, p: float, kernel_seed: int,
                              frames: int) -> np.ndarray:
    """Per-frame success flags (frames, cand_max) for one user's candidates."""
    success = np.zeros((frames, cand_max), dtype=np.uint8)
    workers = min(get_worker_cap(), max(1, frames))
    seed = np.uint64(kernel_seed)

    def chunk(offset: int, count: int) -> None:
        _kernels.evaluate_candidate_frames(
            degrees, user, cand_max, slots, p, seed, offset, count,
            success[offset:offset + count])

    if workers == 1:
        chunk(0, frames)
    else:
        bounds = np.linspace(0, frames, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(chunk, int(a), int(b - a))
                       for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            for fut in futures:
                fut.result()
    return success


def best_reply_dynamics(config: GameConfig, d_max: int,
                        frames_per_eval: int = 10_000,
                        max_passes: int = 50,
                        seed=0,
                        order: str = "fixed") -> BestReplyState:
    """Run best-reply passes until no user wants to change degree.

    Candidate utilities within one user update share frame randomness
    (common random numbers), and the incumbent is kept unless the best
    candidate improves on it by more than twice the standard error of the
    paired utility difference. Pairing matters: under common random
    numbers the difference is far less noisy than the two estimates
    individually, and an independently-pooled threshold would freeze the
    dynamics long before the population reaches the indifference split.
    ``order`` is "fixed" (ascending user index) or "shuffled" (seeded
    permutation per pass). Deterministic given seed.
    """
    if not isinstance(config.rewards, ConstantReward):
        raise ValidationError("best reply assumes a constant reward scheme")
    if not 1 <= d_max <= config.slots:
        raise ValidationError("d_max must lie in 1..slots")
    if frames_per_eval < 1:
        raise ValidationError("need at least one frame per evaluation")
    if config.users < 1:
        raise ValidationError("need at least one user")
    if order not in ("fixed", "shuffled"):
        raise ValidationError("order must be 'fixed' or 'shuffled'")

    reward = config.rewards.rate
    cost = config.cost
    stream = as_stream(seed)
    degrees = np.ones(config.users, dtype=np.int64)
    candidate_costs = np.arange(1, d_max + 1) * cost

    utility_trace: list[float] = []
    updates: list[UpdateRecord] = []
    converged = False
    pass_index = 0
    for pass_index in range(1, max_passes + 1):
        if order == "shuffled":
            visit = stream.child(pass_index, 0).generator.permutation(config.users)
        else:
            visit = np.arange(config.users)
        changed = False
        current_utilities = np.empty(config.users)
        for user in visit:
            user = int(user)
            kernel_seed = stream.child(pass_index, 1 + user).kernel_seed()
            success = _candidate_success_matrix(
                degrees, user, d_max, config.slots, config.decode_prob,
                kernel_seed, frames_per_eval)
            p_hat = success.mean(axis=0)
            utilities = reward * p_hat - candidate_costs
            incumbent = int(degrees[user]) - 1
            best = int(np.argmax(utilities))
            if frames_per_eval > 1 and best != incumbent:
                paired = success[:, best].astype(np.int8) - success[:, incumbent].astype(np.int8)
                se_diff = reward * float(paired.std(ddof=1)) / math.sqrt(frames_per_eval)
            else:
                se_diff = 0.0
            threshold = 2.0 * se_diff
            if best != incumbent and utilities[best] - utilities[incumbent] > threshold:
                updates.append(UpdateRecord(
                    pass_index, user, incumbent + 1, best + 1,
                    float(utilities[incumbent]), float(utilities[best]), threshold))
                degrees[user] = best + 1
                changed = True
                current_utilities[user] = utilities[best]
            else:
                current_utilities[user] = utilities[incumbent]
        utility_trace.append(float(current_utilities.mean()))
        if not changed:
            converged = True
            break

    histogram = np.bincount(degrees, minlength=d_max + 1)[1:d_max + 1]
    return BestReplyState(
        pure_strategies=degrees,
        pass_index=pass_index,
        converged=converged,
        empirical_distribution=make_distribution(histogram),
        utility_trace=utility_trace,
        updates=updates,
    )


@dataclass(frozen=True)
class SweepRow:
    reward: float
    decode_prob: float
    histogram: np.ndarray
    throughput: float
    plr: float
    converged: bool


def sweep_rewards(config_template: GameConfig, r_grid,
                  d_max: int,
                  frames_per_eval: int = 10_000,
                  eval_frames: int = 100_000,
                  seed=0,
                  max_passes: int = 50,
                  order: str = "fixed") -> list[SweepRow]:
    """Best-reply equilibrium and its measured throughput per reward value.

    Rows come back in grid order; the converged profile's throughput is
    measured on fresh frames. Non-convergence shows up as converged=False
    in the row, never as an exception.
    """
    grid = [float(r) for r in r_grid]
    if not grid:
        raise ValidationError("reward grid is empty")
    stream = as_stream(seed)
    rows = []
    for idx, reward in enumerate(grid):
        cfg = config_template.with_reward(ConstantReward(reward))
        state = best_reply_dynamics(cfg, d_max, frames_per_eval=frames_per_eval,
                                    max_passes=max_passes,
                                    seed=stream.child(idx, 0), order=order)
        measured = estimate_profile_throughput(cfg, state.profile(), eval_frames,
                                               stream.child(idx, 1))
        rows.append(SweepRow(
            reward=reward,
            decode_prob=cfg.decode_prob,
            histogram=np.asarray(state.empirical_distribution.probs, dtype=float),
            throughput=measured.throughput,
            plr=measured.plr,
            converged=state.converged,
        ))
    return rows
