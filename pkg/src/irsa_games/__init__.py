"""Game-theoretic optimization of IRSA-style random access.

Frame-level Monte Carlo simulation with successive interference
cancellation, asymptotic density evolution, and construction/verification
of mixed-strategy Nash equilibria for the access game.
"""

from .core import (
    BudgetExceededError,
    ConstantReward,
    DegreeDistribution,
    GameConfig,
    Mixed,
    PerDegreeReward,
    Pure,
    RandomStream,
    SolverError,
    StrategyProfile,
    ValidationError,
    average_degree,
    make_distribution,
    sample_degree,
    set_worker_cap,
)
from .frame_sim import (
    FrameOutcome,
    SuccessEstimate,
    ThroughputEstimate,
    estimate_profile_throughput,
    estimate_success_probs,
    estimate_throughput,
    exact_success_probabilities,
    run_sic,
    simulate_frame,
)
from .density_evolution import (
    DensityEvolutionResult,
    DEParams,
    de_fixed_point,
    optimize_distribution,
    peak_throughput,
    peak_throughput_objective,
)
from .game import (
    NEReport,
    check_nash,
    enumeration_oracle,
    esu_two_user,
    mixed_utility,
    monte_carlo_oracle,
    pure_utility,
    two_user_exact_oracle,
)
from .ne_solvers import (
    RewardFit,
    exact_composition_oracle,
    fit_rewards_for_ne,
    short_frame_utility,
    solve_short_frame_ne,
    two_user_ne,
    two_user_ne_throughput,
)
from .best_reply import (
    BestReplyState,
    SweepRow,
    best_reply_dynamics,
    sweep_rewards,
)

__version__ = "0.1.0"
