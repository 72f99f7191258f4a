"""Single-frame IRSA simulation on the collision channel with erasures.

Slots are indexed 0..slots-1. Each user places its replicas on a uniformly
random subset of distinct slots; every replica is independently erased with
probability 1 - decode_prob, and the erasure mark is fixed for the whole
frame. SIC runs to fixpoint: an erased replica never decodes but keeps
interfering until its user is decoded from another slot, at which point all
of the user's replicas are removed (the pointer mechanism survives erasure).

Monte Carlo estimators derive one splitmix64 stream per frame from
(seed, frame index), so estimates are bit-identical regardless of worker
count or chunking. The exact enumeration oracle is independent of that
path and is the reference the simulators are tested against.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    BudgetExceededError,
    DegreeDistribution,
    GameConfig,
    Mixed,
    Pure,
    RandomStream,
    StrategyProfile,
    ValidationError,
    as_stream,
    get_worker_cap,
)

__all__ = [
    "FrameOutcome",
    "SuccessEstimate",
    "ThroughputEstimate",
    "simulate_frame",
    "run_sic",
    "estimate_success_probs",
    "estimate_throughput",
    "estimate_profile_throughput",
    "exact_success_probabilities",
    "DEFAULT_ENUMERATION_BUDGET",
]

DEFAULT_ENUMERATION_BUDGET = 10 ** 8


@dataclass(frozen=True)
class FrameOutcome:
    """Everything that happened in one simulated frame."""

    placements: tuple[tuple[int, ...], ...]
    erased: tuple[tuple[bool, ...], ...]
    decoded: tuple[bool, ...]
    sic_iterations: int


@dataclass(frozen=True)
class SuccessEstimate:
    """Per-user empirical decode probabilities with binomial standard errors."""

    probs: np.ndarray
    std_errors: np.ndarray
    frames: int


@dataclass(frozen=True)
class ThroughputEstimate:
    """Mean decoded users per slot; plr is the undecoded-user fraction.

    ``throughput == load * (1 - plr)`` holds exactly by construction.
    """

    throughput: float
    plr: float
    std_error: float
    frames: int


# ---------------------------------------------------------------------------
# Python-level single-frame path
# ---------------------------------------------------------------------------

def run_sic(placements, erased, n_slots: int) -> tuple[list[bool], int]:
    """Run SIC to fixpoint on explicit placements.

    placements: per-user collection of distinct slot indices.
    erased: per-user flags aligned with placements, or None for no erasures.
    Returns (per-user decoded flags, number of passes). Deterministic.
    """
    place = [tuple(pl) for pl in placements]
    n_users = len(place)
    if erased is None:
        flags = [tuple(False for _ in pl) for pl in place]
    else:
        flags = [tuple(bool(x) for x in fl) for fl in erased]
    for u, (pl, fl) in enumerate(zip(place, flags)):
        if len(pl) != len(set(pl)):
            raise ValidationError(f"user {u} has duplicate replica slots {pl}")
        if any(not 0 <= s < n_slots for s in pl):
            raise ValidationError(f"user {u} has a replica outside slots 0..{n_slots - 1}")
        if len(fl) != len(pl):
            raise ValidationError(f"user {u}: erasure flags do not match replicas")

    erased_at = {(u, s): e for u in range(n_users) for s, e in zip(place[u], flags[u])}
    active = set(range(n_users))
    decoded = [False] * n_users
    iterations = 0
    while True:
        occupants: dict[int, list[int]] = {}
        for u in active:
            for s in place[u]:
                occupants.setdefault(s, []).append(u)
        newly = {us[0] for s, us in occupants.items()
                 if len(us) == 1 and not erased_at[(us[0], s)]}
        if not newly:
            break
        iterations += 1
        for u in newly:
            decoded[u] = True
        active -= newly
    return decoded, iterations


def simulate_frame(config: GameConfig, profile: StrategyProfile,
                   rng: RandomStream) -> FrameOutcome:
    """Simulate one frame: draw degrees, place replicas, mark erasures, peel."""
    profile.validate_for(config)
    gen = rng.generator
    placements = []
    erased = []
    for strategy in profile:
        if isinstance(strategy, Pure):
            d = strategy.degree
        else:
            from .core import sample_degree
            d = sample_degree(strategy.dist, rng)
        slots = tuple(int(s) for s in gen.choice(config.slots, size=d, replace=False))
        marks = tuple(bool(x) for x in (gen.random(d) >= config.decode_prob))
        placements.append(slots)
        erased.append(marks)
    decoded, iterations = run_sic(placements, erased, config.slots)
    return FrameOutcome(tuple(placements), tuple(erased), tuple(decoded), iterations)


# ---------------------------------------------------------------------------
# Batched Monte Carlo estimators
# ---------------------------------------------------------------------------

def _simulate_batch(probs_matrix: np.ndarray, n_slots: int, p: float,
                    kernel_seed: int, frames: int) -> np.ndarray:
    """Decoded-flag matrix (frames, users), chunked over the worker cap."""
    n_users = probs_matrix.shape[0]
    decoded = np.zeros((frames, n_users), dtype=np.uint8)
    iters = np.zeros(frames, dtype=np.int64)
    workers = min(get_worker_cap(), max(1, frames))
    seed = np.uint64(kernel_seed)

    def chunk(offset: int, count: int) -> None:
        _kernels.simulate_profile_frames(
            probs_matrix, n_slots, p, seed, offset, count,
            decoded[offset:offset + count], iters[offset:offset + count])

    if workers == 1:
        chunk(0, frames)
    else:
        bounds = np.linspace(0, frames, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(chunk, int(a), int(b - a))
                       for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            for fut in futures:
                fut.result()
    return decoded


def estimate_success_probs(config: GameConfig, profile: StrategyProfile,
                           frames: int, seed) -> SuccessEstimate:
    """Empirical per-user decode frequency over independent frames."""
    if frames < 1:
        raise ValidationError("need at least one frame")
    profile.validate_for(config)
    if config.users == 0:
        return SuccessEstimate(np.zeros(0), np.zeros(0), frames)
    probs_matrix = profile.degree_prob_matrix()
    decoded = _simulate_batch(probs_matrix, config.slots, config.decode_prob,
                              as_stream(seed).kernel_seed(), frames)
    counts = decoded.sum(axis=0, dtype=np.int64)
    p_hat = counts / frames
    se = np.sqrt(p_hat * (1.0 - p_hat) / frames)
    return SuccessEstimate(p_hat, se, frames)


def estimate_profile_throughput(config: GameConfig, profile: StrategyProfile,
                                frames: int, seed) -> ThroughputEstimate:
    """Throughput/PLR of an arbitrary profile over independent frames."""
    if frames < 1:
        raise ValidationError("need at least one frame")
    profile.validate_for(config)
    if config.users == 0:
        return ThroughputEstimate(0.0, 0.0, 0.0, frames)
    probs_matrix = profile.degree_prob_matrix()
    decoded = _simulate_batch(probs_matrix, config.slots, config.decode_prob,
                              as_stream(seed).kernel_seed(), frames)
    per_frame = decoded.sum(axis=1, dtype=np.int64)
    decoded_frac = float(per_frame.sum()) / (frames * config.users)
    plr = 1.0 - decoded_frac
    throughput = config.load * (1.0 - plr)
    if frames > 1:
        std_error = float(np.std(per_frame / config.slots, ddof=1)) / math.sqrt(frames)
    else:
        std_error = 0.0
    return ThroughputEstimate(throughput, plr, std_error, frames)


def estimate_throughput(config: GameConfig, dist: DegreeDistribution,
                        frames: int, seed) -> ThroughputEstimate:
    """Throughput/PLR when every user plays the same degree distribution."""
    profile = StrategyProfile.symmetric(Mixed(dist), config.users)
    return estimate_profile_throughput(config, profile, frames, seed)


# ---------------------------------------------------------------------------
# Exact enumeration oracle
# ---------------------------------------------------------------------------

def _enumeration_cost(config: GameConfig, profile: StrategyProfile) -> float:
    cost = 1.0
    for strategy in profile:
        per_user = 0.0
        for d, _w in strategy.degree_options():
            terms = math.comb(config.slots, d)
            if config.decode_prob < 1.0:
                terms *= 2 ** d
            per_user += terms
        cost *= per_user
        if cost > 1e18:
            break
    return cost


def _erasure_averaged_success(placements: tuple[tuple[int, ...], ...],
                              n_slots: int, p: float) -> np.ndarray:
    """Exact per-user decode probabilities for fixed placements, p < 1.

    Erasure marks are revealed lazily: whenever a slot holds a single
    un-cancelled replica with an unrevealed mark, branch on clean (prob p,
    user decodes and is removed) versus erased (prob 1-p, slot stays
    blocked). Marks that never gate a decode are never revealed, so the
    sum has far fewer than 2**replicas branches but the same value.
    """
    n_users = len(placements)
    result = np.zeros(n_users)

    def frontier(removed: frozenset, revealed: frozenset):
        for s in range(n_slots):
            occupants = [u for u in range(n_users)
                         if u not in removed and s in placements[u]]
            if len(occupants) == 1 and (occupants[0], s) not in revealed:
                return occupants[0], s
        return None

    def recurse(removed: frozenset, revealed: frozenset, weight: float) -> None:
        pick = frontier(removed, revealed)
        if pick is None:
            for u in removed:
                result[u] += weight
            return
        u, s = pick
        recurse(removed | {u}, revealed, weight * p)
        recurse(removed, revealed | {(u, s)}, weight * (1.0 - p))

    recurse(frozenset(), frozenset(), 1.0)
    return result


def exact_success_probabilities(config: GameConfig, profile: StrategyProfile,
                                budget: float = DEFAULT_ENUMERATION_BUDGET) -> np.ndarray:
    """Exact per-user decode probabilities by full placement enumeration.

    Mixed strategies are expanded over their supports with probability
    weights. Refuses (BudgetExceededError) when the weighted term count
    would exceed ``budget``; callers fall back to Monte Carlo.
    """
    profile.validate_for(config)
    if config.users == 0:
        return np.zeros(0)
    cost = _enumeration_cost(config, profile)
    if cost > budget:
        raise BudgetExceededError(
            f"enumeration needs ~{cost:.3g} weighted terms, budget is {budget:.3g}")
    n_slots = config.slots
    p = config.decode_prob

    per_user_options = []
    for strategy in profile:
        options = []
        for d, w in strategy.degree_options():
            placement_prob = w / math.comb(n_slots, d)
            for subset in itertools.combinations(range(n_slots), d):
                options.append((subset, placement_prob))
        per_user_options.append(options)

    result = np.zeros(config.users)
    for combo in itertools.product(*per_user_options):
        weight = 1.0
        for _, w in combo:
            weight *= w
        placements = tuple(subset for subset, _ in combo)
        if p >= 1.0:
            decoded, _ = run_sic(placements, None, n_slots)
            result += weight * np.asarray(decoded, dtype=float)
        elif p <= 0.0:
            continue
        else:
            result += weight * _erasure_averaged_success(placements, n_slots, p)
    return result
