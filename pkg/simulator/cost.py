"""
Per-player costs of the navigation game.

Each player pays for control effort, for speed, for coming closer than a
threshold to any other player, and at the final step for its distance to
its goal state. Every term has analytic first and second derivatives so the
game can be quadraticized along a nominal trajectory.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import DimensionError
from .state_space import (
    CONTROL_DIM_PER_PLAYER,
    PX,
    PY,
    STATE_DIM_PER_PLAYER,
    V,
    control_slice,
    state_slice,
)
from .trajectory import Trajectory

# Added to R_ii after quadraticization
CONTROL_HESSIAN_REGULARIZATION = 1e-6

# Pairs closer than this are treated as coincident
_COINCIDENT_DISTANCE = 1e-9


@dataclass
class QuadraticCostApprox:
    """
    Second-order model of one player's cost at one step, in deviation coordinates.

    cost(x + dx, u + du) ~ c + l'dx + 1/2 dx'Q dx + sum_j (r_j'du_j + 1/2 du_j'R_j du_j)

    Attributes:
        Q: (4N, 4N) symmetric state Hessian
        l: (4N,) state gradient
        Rs: R_ij for every player j (2 x 2); only R_ii is nonzero here
        rs: r_ij for every player j (2,); only r_ii is nonzero here
    """

    Q: np.ndarray
    l: np.ndarray
    Rs: List[np.ndarray]
    rs: List[np.ndarray]

    def scaled(self, factor: float) -> "QuadraticCostApprox":
        return QuadraticCostApprox(
            Q=factor * self.Q,
            l=factor * self.l,
            Rs=[factor * R for R in self.Rs],
            rs=[factor * r for r in self.rs],
        )


@dataclass
class PlayerCost:
    """
    Cost of one player in the N-player navigation game.

    Attributes:
        player: index of the player paying this cost
        num_players: total player count N
        goal: goal state block [p_x, p_y, theta, v]
        horizon_steps: index of the terminal step
        weight_terminal: weight of |x_i(T) - goal|^2
        weight_control: diagonal of the 2 x 2 control weight
        weight_velocity: weight of (v_i - reference_speed)^2
        reference_speed: preferred speed (0 means "prefer standing still")
        weight_proximity: weight of the semi-quadratic proximity penalty
        proximity_threshold: distance below which the proximity penalty is active
    """

    player: int
    num_players: int
    goal: np.ndarray
    horizon_steps: int
    weight_terminal: float = 10.0
    weight_control: np.ndarray = field(default_factory=lambda: np.ones(CONTROL_DIM_PER_PLAYER))
    weight_velocity: float = 0.1
    reference_speed: float = 0.0
    weight_proximity: float = 50.0
    proximity_threshold: float = 0.75

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)
        self.weight_control = np.asarray(self.weight_control, dtype=float)
        if self.goal.shape != (STATE_DIM_PER_PLAYER,):
            raise DimensionError(f"goal must have 4 entries, got {self.goal.shape}")
        if not 0 <= self.player < self.num_players:
            raise DimensionError(f"player {self.player} out of range for {self.num_players} players")
        if self.weight_control.shape != (CONTROL_DIM_PER_PLAYER,) or np.any(self.weight_control <= 0):
            raise ValueError("weight_control must hold two strictly positive entries")
        if min(self.weight_terminal, self.weight_velocity, self.weight_proximity) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.proximity_threshold <= 0:
            raise ValueError("proximity_threshold must be positive")

    @property
    def state_dim(self) -> int:
        return STATE_DIM_PER_PLAYER * self.num_players

    def scaled(self, factor: float) -> "PlayerCost":
        """Copy of this cost with every weight multiplied by `factor`."""
        return replace(
            self,
            goal=self.goal.copy(),
            weight_terminal=factor * self.weight_terminal,
            weight_control=factor * self.weight_control,
            weight_velocity=factor * self.weight_velocity,
            weight_proximity=factor * self.weight_proximity,
        )

    # =========================================================================
    # Cost Evaluation
    # =========================================================================

    def control_cost(self, u: np.ndarray) -> float:
        u_i = np.asarray(u)[control_slice(self.player)]
        return float(np.sum(self.weight_control * u_i * u_i))

    def velocity_cost(self, x: np.ndarray) -> float:
        v = x[STATE_DIM_PER_PLAYER * self.player + V]
        return float(self.weight_velocity * (v - self.reference_speed) ** 2)

    def proximity_cost(self, x: np.ndarray) -> float:
        total = 0.0
        p_i = self._position(x, self.player)
        for j in range(self.num_players):
            if j == self.player:
                continue
            distance = float(np.linalg.norm(p_i - self._position(x, j)))
            gap = max(0.0, self.proximity_threshold - distance)
            total += gap * gap
        return float(self.weight_proximity * total)

    def terminal_cost(self, x: np.ndarray) -> float:
        error = np.asarray(x)[state_slice(self.player)] - self.goal
        return float(self.weight_terminal * error @ error)

    def running_cost(self, t: int, x: np.ndarray, u: Optional[np.ndarray] = None) -> float:
        """
        Cost rate at step t. At the terminal step only the goal penalty is charged.

        Args:
            t: step index
            x: joint state
            u: joint control (ignored at the terminal step)
        """
        x = np.asarray(x, dtype=float)
        if t >= self.horizon_steps:
            return self.terminal_cost(x)
        return self.control_cost(u) + self.velocity_cost(x) + self.proximity_cost(x)

    # =========================================================================
    # Derivatives
    # =========================================================================

    def state_derivatives(self, t: int, x: np.ndarray):
        """
        Gradient and Hessian of the state-dependent part of the cost at step t.

        Returns:
            (l, Q) with l of shape (4N,) and Q of shape (4N, 4N), unregularized
        """
        x = np.asarray(x, dtype=float)
        n = self.state_dim
        l = np.zeros(n)
        Q = np.zeros((n, n))
        block = state_slice(self.player)

        if t >= self.horizon_steps:
            l[block] = 2.0 * self.weight_terminal * (x[block] - self.goal)
            Q[block, block] = 2.0 * self.weight_terminal * np.eye(STATE_DIM_PER_PLAYER)
            return l, Q

        iv = STATE_DIM_PER_PLAYER * self.player + V
        l[iv] = 2.0 * self.weight_velocity * (x[iv] - self.reference_speed)
        Q[iv, iv] = 2.0 * self.weight_velocity

        if self.weight_proximity > 0:
            self._add_proximity_derivatives(x, l, Q)
        return l, Q

    def _add_proximity_derivatives(self, x: np.ndarray, l: np.ndarray, Q: np.ndarray) -> None:
        w = self.weight_proximity
        threshold = self.proximity_threshold
        idx_i = self._position_indices(self.player)
        p_i = x[idx_i]
        for j in range(self.num_players):
            if j == self.player:
                continue
            idx_j = self._position_indices(j)
            delta = p_i - x[idx_j]
            distance = float(np.linalg.norm(delta))
            if distance >= threshold:
                continue

            if distance < _COINCIDENT_DISTANCE:
                grad = np.zeros(2)
                hess = 2.0 * w * np.eye(2)
            else:
                n = delta / distance
                gap = threshold - distance
                grad = -2.0 * w * gap * n
                hess = 2.0 * w * np.outer(n, n) - 2.0 * w * gap / distance * (np.eye(2) - np.outer(n, n))

            l[idx_i] += grad
            l[idx_j] -= grad
            Q[np.ix_(idx_i, idx_i)] += hess
            Q[np.ix_(idx_j, idx_j)] += hess
            Q[np.ix_(idx_i, idx_j)] -= hess
            Q[np.ix_(idx_j, idx_i)] -= hess

    def quadraticize_point(
        self, t: int, x: np.ndarray, u: Optional[np.ndarray], regularize: bool = True
    ) -> QuadraticCostApprox:
        """
        Quadratic model of running_cost(t, .) about (x, u).

        Args:
            regularize: project Q onto the PSD cone and add a small multiple of I to R_ii
        """
        l, Q = self.state_derivatives(t, x)
        Rs = [np.zeros((CONTROL_DIM_PER_PLAYER, CONTROL_DIM_PER_PLAYER)) for _ in range(self.num_players)]
        rs = [np.zeros(CONTROL_DIM_PER_PLAYER) for _ in range(self.num_players)]
        if t < self.horizon_steps:
            u_i = np.asarray(u, dtype=float)[control_slice(self.player)]
            Rs[self.player] = 2.0 * np.diag(self.weight_control)
            rs[self.player] = 2.0 * self.weight_control * u_i

        if regularize:
            Q = project_psd(Q)
            Rs[self.player] = Rs[self.player] + CONTROL_HESSIAN_REGULARIZATION * np.eye(CONTROL_DIM_PER_PLAYER)
        return QuadraticCostApprox(Q=Q, l=l, Rs=Rs, rs=rs)

    # =========================================================================
    # Helpers
    # =========================================================================

    @staticmethod
    def _position_indices(player: int) -> List[int]:
        base = STATE_DIM_PER_PLAYER * player
        return [base + PX, base + PY]

    def _position(self, x: np.ndarray, player: int) -> np.ndarray:
        return np.asarray(x)[self._position_indices(player)]


def project_psd(matrix: np.ndarray) -> np.ndarray:
    """Nearest symmetric PSD matrix by clamping negative eigenvalues to zero."""
    symmetric = 0.5 * (matrix + matrix.T)
    eigenvalues, eigenvectors = np.linalg.eigh(symmetric)
    if eigenvalues.min() >= 0.0:
        return symmetric
    clamped = (eigenvectors * np.maximum(eigenvalues, 0.0)) @ eigenvectors.T
    return 0.5 * (clamped + clamped.T)


def running_cost(costs: List[PlayerCost], player: int, t: int, x: np.ndarray, u: Optional[np.ndarray]) -> float:
    """Running cost of `player` at step t."""
    return costs[player].running_cost(t, x, u)


def total_cost(cost: PlayerCost, trajectory: Trajectory) -> float:
    """
    Total cost of one player along a trajectory.

    dt-weighted sum of running costs over the controlled steps plus the goal
    penalty at the final state. The terminal step is the trajectory's last
    state regardless of cost.horizon_steps.
    """
    dt = trajectory.dt
    running = 0.0
    for t in range(trajectory.horizon):
        x, u = trajectory.states[t], trajectory.controls[t]
        running += cost.control_cost(u) + cost.velocity_cost(x) + cost.proximity_cost(x)
    return dt * running + cost.terminal_cost(trajectory.final_state)


def quadraticize(cost: PlayerCost, nominal: Trajectory, regularize: bool = True) -> List[QuadraticCostApprox]:
    """
    Quadratic cost models along a nominal trajectory.

    Returns:
        H + 1 models: one per control step followed by the terminal model.
        Models are not scaled by dt.
    """
    if cost.horizon_steps != nominal.horizon:
        cost = replace(cost, horizon_steps=nominal.horizon)
    approximations = []
    for t in range(nominal.horizon):
        approximations.append(
            cost.quadraticize_point(t, nominal.states[t], nominal.controls[t], regularize)
        )
    approximations.append(cost.quadraticize_point(nominal.horizon, nominal.final_state, None, regularize))
    return approximations
