"""
Time-indexed joint trajectories.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from .errors import DimensionError
from .state_space import CONTROL_DIM_PER_PLAYER, STATE_DIM_PER_PLAYER, positions, state_slice


@dataclass
class Trajectory:
    """
    Joint states and joint controls over a horizon of H steps.

    Attributes:
        states: (H + 1, 4N) array, states[t] is the state at step t
        controls: (H, 2N) array, controls[t] is held constant over [t, t + 1)
        dt: step length in seconds
    """

    states: np.ndarray
    controls: np.ndarray
    dt: float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.states.ndim != 2 or self.controls.ndim != 2:
            raise DimensionError("states and controls must be 2-D arrays")
        if self.states.shape[0] != self.controls.shape[0] + 1:
            raise DimensionError(
                f"{self.states.shape[0]} states do not match {self.controls.shape[0]} controls"
            )
        if self.states.shape[1] % STATE_DIM_PER_PLAYER != 0:
            raise DimensionError(f"state width {self.states.shape[1]} is not a multiple of 4")
        if self.controls.shape[1] != self.num_players * CONTROL_DIM_PER_PLAYER:
            raise DimensionError(
                f"control width {self.controls.shape[1]} does not match {self.num_players} players"
            )

    @property
    def horizon(self) -> int:
        """Number of control steps H."""
        return self.controls.shape[0]

    @property
    def num_players(self) -> int:
        return self.states.shape[1] // STATE_DIM_PER_PLAYER

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def positions(self) -> np.ndarray:
        """(H + 1, N, 2) array of player positions."""
        return positions(self.states, self.num_players)

    def player_states(self, player: int) -> np.ndarray:
        """(H + 1, 4) array of one player's state block."""
        return self.states[:, state_slice(player)]

    def copy(self) -> "Trajectory":
        return Trajectory(self.states.copy(), self.controls.copy(), self.dt)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "states": self.states.tolist(),
            "controls": self.controls.tolist(),
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Trajectory":
        controls = np.asarray(data["controls"], dtype=float)
        states = np.asarray(data["states"], dtype=float)
        if controls.size == 0:
            controls = controls.reshape(0, (states.shape[1] // STATE_DIM_PER_PLAYER) * CONTROL_DIM_PER_PLAYER)
        return cls(states, controls, float(data["dt"]))
