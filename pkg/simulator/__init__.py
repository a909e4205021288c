"""
Simulator package.
Contains the joint unicycle dynamics, per-player costs and the game definition.
"""

from .cost import PlayerCost, QuadraticCostApprox, quadraticize, running_cost, total_cost
from .dynamics import DynamicsModel, LinearizedDynamics, UnicycleDynamics
from .errors import (
    ArchiveError,
    ConfigError,
    DimensionError,
    DivergenceError,
    EstimatorCollapseError,
    LQSolverError,
    NonFiniteError,
    StrategyAlignmentError,
)
from .game import GameDefinition
from .trajectory import Trajectory

__all__ = [
    "PlayerCost", "QuadraticCostApprox", "quadraticize", "running_cost", "total_cost",
    "DynamicsModel", "LinearizedDynamics", "UnicycleDynamics",
    "GameDefinition", "Trajectory",
    "StrategyAlignmentError", "DimensionError", "NonFiniteError", "DivergenceError",
    "LQSolverError", "EstimatorCollapseError", "ConfigError", "ArchiveError",
]
