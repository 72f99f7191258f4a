"""Shared domain types for IRSA access games.

Degrees are 1-based throughout: a user always transmits at least one
repetition per frame, and a degree distribution assigns probabilities to
degrees ``1..d_max``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "ValidationError",
    "BudgetExceededError",
    "SolverError",
    "DegreeDistribution",
    "make_distribution",
    "average_degree",
    "sample_degree",
    "ConstantReward",
    "PerDegreeReward",
    "RewardScheme",
    "GameConfig",
    "Pure",
    "Mixed",
    "Strategy",
    "StrategyProfile",
    "RandomStream",
    "as_stream",
    "get_worker_cap",
    "set_worker_cap",
]

NORMALIZATION_TOL = 1e-9

WORKERS_ENV_VAR = "IRSA_GAMES_WORKERS"


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class BudgetExceededError(RuntimeError):
    """Raised when an exact enumeration would exceed its term budget."""


class SolverError(RuntimeError):
    """Raised when an equilibrium solver cannot produce a usable solution."""


# ---------------------------------------------------------------------------
# Degree distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegreeDistribution:
    """Probability vector over repetition counts (degrees ``1..d_max``).

    ``probs[k]`` is the probability of transmitting ``k + 1`` repetitions.
    Entries must be non-negative and sum to 1 within ``1e-9``; trailing
    zeros are kept so that ``d_max`` reflects the declared strategy space.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("degree distribution needs a non-empty 1-d probability vector")
        if np.any(arr < 0):
            raise ValidationError(f"negative probability in degree distribution: {arr}")
        total = float(arr.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"degree probabilities sum to {total!r}, expected 1 within {NORMALIZATION_TOL}")
        if not np.any(arr > 0):
            raise ValidationError("degree distribution has empty support")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def d_max(self) -> int:
        return int(self.probs.size)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(d) for d in np.nonzero(self.probs)[0] + 1)

    def prob(self, degree: int) -> float:
        if not 1 <= degree <= self.d_max:
            return 0.0
        return float(self.probs[degree - 1])

    def poly(self, x: float) -> float:
        """Evaluate the generating polynomial sum_d probs_d * x**d."""
        degrees = np.arange(1, self.d_max + 1)
        return float(np.sum(self.probs * np.power(float(x), degrees)))

    def poly_derivative(self, x: float) -> float:
        """Evaluate sum_d d * probs_d * x**(d-1)."""
        degrees = np.arange(1, self.d_max + 1)
        return float(np.sum(degrees * self.probs * np.power(float(x), degrees - 1)))

    def average_degree(self) -> float:
        return self.poly_derivative(1.0)

    def items(self) -> Iterable[tuple[int, float]]:
        """(degree, probability) pairs over the support."""
        for d in self.support:
            yield d, float(self.probs[d - 1])

    def __repr__(self) -> str:
        terms = " + ".join(f"{p:.4g}x^{d}" for d, p in self.items())
        return f"DegreeDistribution({terms})"


def make_distribution(raw: Sequence[float]) -> DegreeDistribution:
    """Normalize a non-negative weight vector into a DegreeDistribution.

    Trailing zero entries are preserved, so ``d_max`` equals ``len(raw)``.
    Raises ValidationError for empty, negative or all-zero input.
    """
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("cannot build a distribution from empty input")
    if np.any(arr < 0):
        raise ValidationError(f"negative weight in distribution input: {arr}")
    total = float(arr.sum())
    if total <= 0:
        raise ValidationError("all-zero weights cannot be normalized")
    return DegreeDistribution(arr / total)


def average_degree(dist: DegreeDistribution) -> float:
    """Mean number of repetitions per frame under ``dist``."""
    return dist.average_degree()


def sample_degree(dist: DegreeDistribution, rng: "RandomStream") -> int:
    """Draw one repetition count according to ``dist``."""
    u = rng.generator.random()
    cdf = np.cumsum(dist.probs)
    return int(np.searchsorted(cdf, u, side="right")) + 1


# ---------------------------------------------------------------------------
# Reward schemes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantReward:
    """Same reward for every successful delivery, regardless of degree."""

    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValidationError("rewards must be non-negative")

    def reward(self, degree: int) -> float:
        return self.rate

    def mixed_reward(self, dist: DegreeDistribution) -> float:
        return self.rate


@dataclass(frozen=True)
class PerDegreeReward:
    """Reward that depends on the number of repetitions transmitted.

    ``rates[k]`` is the reward for a success after ``k + 1`` repetitions.
    The distribution-averaged reward is always recomputed from ``rates``
    rather than cached, so it cannot drift.
    """

    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if len(rates) == 0:
            raise ValidationError("per-degree reward needs at least one rate")
        if any(r < 0 for r in rates):
            raise ValidationError("rewards must be non-negative")
        object.__setattr__(self, "rates", rates)

    def reward(self, degree: int) -> float:
        if not 1 <= degree <= len(self.rates):
            raise ValidationError(f"no reward defined for degree {degree} (have 1..{len(self.rates)})")
        return self.rates[degree - 1]

    def mixed_reward(self, dist: DegreeDistribution) -> float:
        """Expected reward of a user playing ``dist`` (recomputed on demand)."""
        return sum(p * self.reward(d) for d, p in dist.items())


RewardScheme = Union[ConstantReward, PerDegreeReward]


# ---------------------------------------------------------------------------
# Game configuration and strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameConfig:
    """Frame, population, channel and economy parameters of one game.

    The load G = users/slots is always derived, never stored. ``users = 0``
    is allowed at the library level (an empty frame is a valid, vacuous
    simulation input); the CLI rejects it.
    """

    slots: int
    users: int
    decode_prob: float = 1.0
    cost: float = 1.0
    rewards: RewardScheme = field(default_factory=lambda: ConstantReward(1.0))

    def __post_init__(self):
        if self.slots < 1:
            raise ValidationError("need at least one slot per frame")
        if self.users < 0:
            raise ValidationError("user count cannot be negative")
        if not 0.0 <= self.decode_prob <= 1.0:
            raise ValidationError("singleton decoding probability must lie in [0, 1]")
        if self.cost < 0:
            raise ValidationError("transmission cost cannot be negative")

    @property
    def load(self) -> float:
        """System load G = users per slot."""
        return self.users / self.slots

    def with_reward(self, scheme: RewardScheme) -> "GameConfig":
        return replace(self, rewards=scheme)


@dataclass(frozen=True)
class Pure:
    """Deterministic strategy: always transmit ``degree`` repetitions."""

    degree: int

    def __post_init__(self):
        if self.degree < 1:
            raise ValidationError("a pure strategy must transmit at least one repetition")

    def degree_options(self) -> tuple[tuple[int, float], ...]:
        return ((self.degree, 1.0),)

    @property
    def max_degree(self) -> int:
        return self.degree


@dataclass(frozen=True)
class Mixed:
    """Randomized strategy: draw the repetition count from ``dist``."""

    dist: DegreeDistribution

    def degree_options(self) -> tuple[tuple[int, float], ...]:
        return tuple(self.dist.items())

    @property
    def max_degree(self) -> int:
        return max(self.dist.support)


Strategy = Union[Pure, Mixed]


@dataclass(frozen=True)
class StrategyProfile:
    """One strategy per active user."""

    strategies: tuple[Strategy, ...]

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))

    @classmethod
    def symmetric(cls, strategy: Strategy, users: int) -> "StrategyProfile":
        return cls((strategy,) * users)

    def __len__(self) -> int:
        return len(self.strategies)

    def __iter__(self):
        return iter(self.strategies)

    def __getitem__(self, i: int) -> Strategy:
        return self.strategies[i]

    def replace_user(self, index: int, strategy: Strategy) -> "StrategyProfile":
        entries = list(self.strategies)
        entries[index] = strategy
        return StrategyProfile(tuple(entries))

    def validate_for(self, config: GameConfig) -> None:
        if len(self.strategies) != config.users:
            raise ValidationError(
                f"profile has {len(self.strategies)} strategies for {config.users} users"
            )
        for i, s in enumerate(self.strategies):
            if s.max_degree > config.slots:
                raise ValidationError(
                    f"user {i} may transmit {s.max_degree} repetitions but the frame has "
                    f"only {config.slots} slots"
                )

    def degree_prob_matrix(self) -> np.ndarray:
        """(users, d_max) row-stochastic matrix of per-user degree probabilities."""
        if not self.strategies:
            return np.zeros((0, 1))
        d_max = max(s.max_degree for s in self.strategies)
        mat = np.zeros((len(self.strategies), d_max))
        for i, s in enumerate(self.strategies):
            for d, p in s.degree_options():
                mat[i, d - 1] = p
        return mat


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------

class RandomStream:
    """Seedable, splittable randomness source.

    Wraps a numpy ``SeedSequence``; children are derived by extending the
    spawn key, so `stream.child(k)` is reproducible and independent of how
    many other children were created. Instances are single-owner: share
    seeds (or spawn children), never the stream object itself.
    """

    def __init__(self, seed: Union[int, np.random.SeedSequence] = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed))
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = np.random.default_rng(self._seq)
        return self._gen

    def child(self, *keys: int) -> "RandomStream":
        seq = np.random.SeedSequence(
            entropy=self._seq.entropy,
            spawn_key=tuple(self._seq.spawn_key) + tuple(int(k) for k in keys),
        )
        return RandomStream(seq)

    def kernel_seed(self) -> int:
        """A 64-bit seed for the compiled simulation kernels."""
        return int(self._seq.generate_state(1, dtype=np.uint64)[0])

    def __repr__(self) -> str:
        return f"RandomStream(entropy={self._seq.entropy}, spawn_key={self._seq.spawn_key})"


def as_stream(seed: Union[int, RandomStream, None]) -> RandomStream:
    if isinstance(seed, RandomStream):
        return seed
    return RandomStream(0 if seed is None else seed)


# ---------------------------------------------------------------------------
# Worker cap (shared by the Monte Carlo drivers)
# ---------------------------------------------------------------------------

_worker_cap: int | None = None


def get_worker_cap() -> int:
    """Maximum concurrent workers for frame replication. Never affects results."""
    if _worker_cap is not None:
        return _worker_cap
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


def set_worker_cap(n: int | None) -> None:
    global _worker_cap
    _worker_cap = None if n is None else max(1, int(n))
