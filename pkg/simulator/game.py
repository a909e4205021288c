"""
Game definition for the N-player navigation problem.

Bundles the joint dynamics, one cost per player, the planning horizon and
the step length. Planners receive a GameDefinition and never build costs
themselves.
"""

from dataclasses import dataclass, replace
from typing import List, Sequence

import numpy as np

from .cost import PlayerCost, total_cost
from .dynamics import DynamicsModel, UnicycleDynamics
from .errors import DimensionError
from .state_space import STATE_DIM_PER_PLAYER
from .trajectory import Trajectory


@dataclass
class GameDefinition:
    """
    A finite-horizon N-player general-sum game.

    Attributes:
        dynamics: joint dynamics of all players
        costs: one PlayerCost per player, in player order
        horizon_steps: number of control steps H
        dt: step length in seconds
    """

    dynamics: DynamicsModel
    costs: List[PlayerCost]
    horizon_steps: int
    dt: float

    def __post_init__(self):
        if len(self.costs) != self.dynamics.num_players:
            raise DimensionError(
                f"{len(self.costs)} costs for {self.dynamics.num_players} players"
            )
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be positive, got {self.horizon_steps}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.costs = [
            cost if cost.horizon_steps == self.horizon_steps else replace(cost, horizon_steps=self.horizon_steps)
            for cost in self.costs
        ]

    @property
    def num_players(self) -> int:
        return self.dynamics.num_players

    @property
    def state_dim(self) -> int:
        return self.dynamics.state_dim

    @property
    def control_dims(self) -> List[int]:
        return self.dynamics.control_dims

    def with_horizon(self, horizon_steps: int) -> "GameDefinition":
        return GameDefinition(self.dynamics, list(self.costs), horizon_steps, self.dt)

    def evaluate_costs(self, trajectory: Trajectory) -> np.ndarray:
        """Total cost of every player along `trajectory`."""
        return np.array([total_cost(cost, trajectory) for cost in self.costs])

    @classmethod
    def navigation(
        cls,
        goals: Sequence[Sequence[float]],
        horizon_steps: int,
        dt: float,
        weight_terminal: float = 10.0,
        weight_control: Sequence[float] = (1.0, 1.0),
        weight_velocity: float = 0.1,
        reference_speed: float = 0.0,
        weight_proximity: float = 50.0,
        proximity_threshold: float = 0.75,
    ) -> "GameDefinition":
        """
        Unicycle navigation game in which every player shares the same weights.

        Args:
            goals: one goal state block [p_x, p_y, theta, v] per player
        """
        goals = np.asarray(goals, dtype=float)
        if goals.ndim != 2 or goals.shape[1] != STATE_DIM_PER_PLAYER:
            raise DimensionError(f"goals must be (N, 4), got {goals.shape}")
        num_players = goals.shape[0]
        costs = [
            PlayerCost(
                player=i,
                num_players=num_players,
                goal=goals[i],
                horizon_steps=horizon_steps,
                weight_terminal=weight_terminal,
                weight_control=np.asarray(weight_control, dtype=float),
                weight_velocity=weight_velocity,
                reference_speed=reference_speed,
                weight_proximity=weight_proximity,
                proximity_threshold=proximity_threshold,
            )
            for i in range(num_players)
        ]
        return cls(UnicycleDynamics(num_players), costs, horizon_steps, dt)
