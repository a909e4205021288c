"""
Planner package for the strategy-alignment project.
Contains the LQ and iterative LQ game solvers, equilibrium inference,
the MAP-aligned planner and its random-equilibrium baseline.
"""

from .strategy import AffineStrategy, StrategyProfile, open_loop_profile, shift_profile
from .lq_game import LQGameStage, NashCheckReport, solve_lq_game, verify_lq_nash
from .ilq_solver import SolveResult, SolverSettings, ilq_solve, rollout, verify_local_nash
from .inference import (
    Belief,
    Particle,
    SeedDistribution,
    combine_duplicates,
    likelihood,
    map_planner_step,
    map_strategy,
    predict_step,
    prune_negligible,
    sample_seeds,
)
from .map_aligned import HumanTeam, MAPAlignedPlanner, RandomEquilibriumBaseline

__all__ = [
    "AffineStrategy", "StrategyProfile", "open_loop_profile", "shift_profile",
    "LQGameStage", "NashCheckReport", "solve_lq_game", "verify_lq_nash",
    "SolveResult", "SolverSettings", "ilq_solve", "rollout", "verify_local_nash",
    "Belief", "Particle", "SeedDistribution", "combine_duplicates", "likelihood",
    "map_planner_step", "map_strategy", "predict_step", "prune_negligible", "sample_seeds",
    "HumanTeam", "MAPAlignedPlanner", "RandomEquilibriumBaseline",
]
