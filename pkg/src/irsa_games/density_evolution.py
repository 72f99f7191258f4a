"""Asymptotic analysis of IRSA degree distributions.

In the limit of large frames at fixed load, the fraction of unresolved
edges follows the scalar recursion

    q_0 = 1,   rho_i = 1 - exp(-q_i * G * avg_degree),   q_{i+1} = lam(rho_i)

where lam is the edge-perspective degree polynomial. The packet loss rate
is the node-perspective polynomial evaluated at the limiting rho, and the
throughput per slot is G * (1 - PLR). The slot side never needs its own
polynomial here: the Poisson limit above substitutes for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .core import DegreeDistribution, ValidationError, as_stream, make_distribution

__all__ = [
    "DensityEvolutionResult",
    "DEParams",
    "de_fixed_point",
    "evaluate_grid",
    "peak_throughput",
    "peak_throughput_objective",
    "optimize_distribution",
    "DEFAULT_LOAD_GRID",
    "PLR_FLOOR",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
PLR_FLOOR = 1e-6  # below this the load is considered fully decodable

# 0.01 .. 1.50 in steps of 0.005
DEFAULT_LOAD_GRID = np.linspace(0.01, 1.50, 299)


@dataclass(frozen=True)
class DensityEvolutionResult:
    q_trajectory: np.ndarray
    rho_limit: float
    plr: float
    throughput: float
    iterations: int
    converged: bool


def de_fixed_point(dist: DegreeDistribution, load: float,
                   max_iter: int = DEFAULT_MAX_ITER,
                   tol: float = DEFAULT_TOL) -> DensityEvolutionResult:
    """Iterate the unresolved-edge recursion for one load value.

    The iteration is monotone non-increasing from q_0 = 1, so it always
    settles; if max_iter is hit first the last iterate is reported with
    converged = False.
    """
    if load <= 0:
        raise ValidationError("load must be positive")
    if max_iter < 1 or tol <= 0:
        raise ValidationError("need max_iter >= 1 and tol > 0")
    avg_deg = dist.average_degree()
    q = 1.0
    trajectory = [q]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        rho = 1.0 - math.exp(-q * load * avg_deg)
        q_next = dist.poly_derivative(rho) / avg_deg
        trajectory.append(q_next)
        iterations += 1
        if abs(q_next - q) < tol:
            q = q_next
            converged = True
            break
        q = q_next
    rho_limit = 1.0 - math.exp(-q * load * avg_deg)
    plr = dist.poly(rho_limit)
    throughput = load * (1.0 - plr)
    return DensityEvolutionResult(
        q_trajectory=np.asarray(trajectory),
        rho_limit=rho_limit,
        plr=plr,
        throughput=throughput,
        iterations=iterations,
        converged=converged,
    )


def evaluate_grid(dist: DegreeDistribution, g_grid: np.ndarray,
                  tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, np.ndarray]:
    """(plr, throughput) arrays over a grid of loads (compiled fast path)."""
    grid = np.asarray(g_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("load grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("load grid must be strictly increasing")
    if grid[0] <= 0:
        raise ValidationError("loads must be positive")
    plr = np.empty(grid.size)
    rho = np.empty(grid.size)
    iters = np.empty(grid.size, dtype=np.int64)
    conv = np.empty(grid.size, dtype=np.uint8)
    _kernels.plr_fixed_point_grid(np.asarray(dist.probs, dtype=float), grid,
                                  tol, max_iter, plr, rho, iters, conv)
    throughput = grid * (1.0 - plr)
    return plr, throughput


def peak_throughput(dist: DegreeDistribution, g_grid: np.ndarray | None = None,
                    tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> tuple[float, float]:
    """Maximize throughput over a load grid; ties break to the smaller load."""
    grid = DEFAULT_LOAD_GRID if g_grid is None else np.asarray(g_grid, dtype=float)
    _, throughput = evaluate_grid(dist, grid, tol=tol, max_iter=max_iter)
    best = int(np.argmax(throughput))  # argmax returns the first (smallest-G) maximum
    return float(grid[best]), float(throughput[best])


# ---------------------------------------------------------------------------
# Differential-evolution search over the probability simplex
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DEParams:
    """DE/rand/1/bin settings."""

    population: int = 40
    mutation: float = 0.5
    crossover: float = 0.9
    generations: int = 300


def peak_throughput_objective(g_grid: np.ndarray | None = None,
                              tol: float = 1e-8,
                              max_iter: int = 2000) -> Callable[[np.ndarray], float]:
    """Objective functional: peak throughput of a raw probability vector.

    Looser iteration settings than the analysis path; the optimizer only
    needs the objective ranking to be stable.
    """
    grid = DEFAULT_LOAD_GRID if g_grid is None else np.asarray(g_grid, dtype=float)

    def objective(probs: np.ndarray) -> float:
        plr = np.empty(grid.size)
        rho = np.empty(grid.size)
        iters = np.empty(grid.size, dtype=np.int64)
        conv = np.empty(grid.size, dtype=np.uint8)
        _kernels.plr_fixed_point_grid(np.asarray(probs, dtype=float), grid,
                                      tol, max_iter, plr, rho, iters, conv)
        return float(np.max(grid * (1.0 - plr)))

    return objective


def _repair(vec: np.ndarray) -> np.ndarray:
    """Project onto the simplex by clipping negatives and renormalizing."""
    out = np.clip(vec, 0.0, None)
    total = out.sum()
    if total <= 0:
        return np.full(vec.size, 1.0 / vec.size)
    return out / total


def optimize_distribution(d_max: int,
                          objective: Callable[[np.ndarray], float] | None = None,
                          de_params: DEParams | None = None,
                          seed=0) -> DegreeDistribution:
    """DE/rand/1/bin search for a degree distribution maximizing the objective.

    Candidates live on the probability simplex of dimension d_max; repair is
    clip-and-renormalize, so vertices stay reachable. Deterministic for a
    fixed seed, and elitist: the returned candidate is never worse than the
    best member of the initial population.
    """
    if d_max < 2:
        raise ValidationError("optimization needs d_max >= 2")
    params = de_params or DEParams()
    if params.population < 10:
        raise ValidationError("population must be at least 10")
    if objective is None:
        objective = peak_throughput_objective()
    gen = as_stream(seed).generator

    pop = np.stack([_repair(gen.random(d_max)) for _ in range(params.population)])
    scores = np.array([objective(member) for member in pop])
    best_idx = int(np.argmax(scores))
    best_vec, best_score = pop[best_idx].copy(), float(scores[best_idx])

    n = params.population
    for _ in range(params.generations):
        for i in range(n):
            choices = [j for j in range(n) if j != i]
            r1, r2, r3 = gen.choice(choices, size=3, replace=False)
            mutant = pop[r1] + params.mutation * (pop[r2] - pop[r3])
            cross = gen.random(d_max) < params.crossover
            cross[gen.integers(d_max)] = True
            trial = _repair(np.where(cross, mutant, pop[i]))
            trial_score = objective(trial)
            if trial_score >= scores[i]:
                pop[i] = trial
                scores[i] = trial_score
                if trial_score > best_score:
                    best_vec, best_score = trial.copy(), trial_score
    return make_distribution(best_vec)
