"""
Joint dynamics of all players.

Continuous-time flow, its RK4 discretization with zero-order-hold controls,
and the analytic Jacobians of the discrete step used by the LQ approximation.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import DimensionError
from .state_space import (
    ACCEL,
    CONTROL_DIM_PER_PLAYER,
    OMEGA,
    PX,
    PY,
    STATE_DIM_PER_PLAYER,
    THETA,
    V,
    check_finite,
    check_joint_control,
    check_joint_state,
)
from .trajectory import Trajectory


@dataclass
class LinearizedDynamics:
    """
    Discrete-time linearization of one step about a nominal point.

    dx[t + 1] = A dx[t] + sum_i Bs[i] du_i[t]

    Attributes:
        A: (4N, 4N) state Jacobian of the step map
        Bs: one (4N, 2) control Jacobian per player
    """

    A: np.ndarray
    Bs: List[np.ndarray]


class DynamicsModel(ABC):
    """
    Joint dynamics of N players.

    Subclasses provide the continuous flow and its Jacobians; integration and
    linearization of the discrete step are shared.
    """

    def __init__(self, num_players: int):
        if num_players < 1:
            raise DimensionError(f"need at least one player, got {num_players}")
        self.num_players = num_players

    @property
    def state_dim(self) -> int:
        return STATE_DIM_PER_PLAYER * self.num_players

    @property
    def control_dim(self) -> int:
        return CONTROL_DIM_PER_PLAYER * self.num_players

    @property
    def control_dims(self) -> List[int]:
        return [CONTROL_DIM_PER_PLAYER] * self.num_players

    @abstractmethod
    def flow(self, x: np.ndarray, u: np.ndarray, t: int = 0) -> np.ndarray:
        """State derivative at (x, u)."""

    @abstractmethod
    def flow_jacobians(self, x: np.ndarray, u: np.ndarray, t: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """Continuous-time Jacobians (df/dx, df/du) at (x, u)."""

    def integrate(self, x: np.ndarray, u: np.ndarray, dt: float, t: int = 0) -> np.ndarray:
        """
        Advance the joint state by one RK4 step with u held constant.

        Args:
            x: joint state (4N)
            u: joint control (2N)
            dt: step length, must be positive
            t: step index (the unicycle flow ignores it)

        Returns:
            Joint state after dt

        Raises:
            DimensionError: on inconsistent dimensions
            NonFiniteError: on NaN / inf inputs
        """
        x = check_joint_state(x, self.num_players)
        u = check_joint_control(u, self.num_players)
        check_finite(x, "state")
        check_finite(u, "control")
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return self._rk4(x, u, dt, t)

    def _rk4(self, x: np.ndarray, u: np.ndarray, dt: float, t: int) -> np.ndarray:
        k1 = self.flow(x, u, t)
        k2 = self.flow(x + 0.5 * dt * k1, u, t)
        k3 = self.flow(x + 0.5 * dt * k2, u, t)
        k4 = self.flow(x + dt * k3, u, t)
        return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def linearize_step(self, x: np.ndarray, u: np.ndarray, dt: float, t: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """
        Jacobians of the RK4 step map, obtained by differentiating each stage.

        Returns:
            (A, B) with A = d x_next / d x (4N x 4N) and B = d x_next / d u (4N x 2N)
        """
        eye = np.eye(self.state_dim)

        k1 = self.flow(x, u, t)
        A1, B1 = self.flow_jacobians(x, u, t)
        dk1_dx, dk1_du = A1, B1

        x2 = x + 0.5 * dt * k1
        k2 = self.flow(x2, u, t)
        A2, B2 = self.flow_jacobians(x2, u, t)
        dk2_dx = A2 @ (eye + 0.5 * dt * dk1_dx)
        dk2_du = A2 @ (0.5 * dt * dk1_du) + B2

        x3 = x + 0.5 * dt * k2
        k3 = self.flow(x3, u, t)
        A3, B3 = self.flow_jacobians(x3, u, t)
        dk3_dx = A3 @ (eye + 0.5 * dt * dk2_dx)
        dk3_du = A3 @ (0.5 * dt * dk2_du) + B3

        x4 = x + dt * k3
        A4, B4 = self.flow_jacobians(x4, u, t)
        dk4_dx = A4 @ (eye + dt * dk3_dx)
        dk4_du = A4 @ (dt * dk3_du) + B4

        A = eye + dt / 6.0 * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx)
        B = dt / 6.0 * (dk1_du + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du)
        return A, B

    def split_input_jacobian(self, B: np.ndarray) -> List[np.ndarray]:
        """Split a joint (4N x 2N) input Jacobian into per-player columns."""
        return np.split(B, np.cumsum(self.control_dims)[:-1], axis=1)

    def linearize(self, nominal: Trajectory) -> List[LinearizedDynamics]:
        """
        Linearize the discrete dynamics along a nominal trajectory.

        Args:
            nominal: trajectory whose states follow from integrating its controls

        Returns:
            One LinearizedDynamics per control step
        """
        if nominal.num_players != self.num_players:
            raise DimensionError(
                f"trajectory has {nominal.num_players} players, dynamics has {self.num_players}"
            )
        linearized = []
        for t in range(nominal.horizon):
            A, B = self.linearize_step(nominal.states[t], nominal.controls[t], nominal.dt, t)
            linearized.append(LinearizedDynamics(A=A, Bs=self.split_input_jacobian(B)))
        return linearized

    def simulate(self, x0: np.ndarray, controls: np.ndarray, dt: float) -> Trajectory:
        """Open-loop integration of a control sequence from x0."""
        controls = np.asarray(controls, dtype=float)
        states = [check_joint_state(x0, self.num_players, "x0")]
        for t, u in enumerate(controls):
            states.append(self.integrate(states[-1], u, dt, t))
        return Trajectory(np.array(states), controls.reshape(-1, self.control_dim), dt)


class UnicycleDynamics(DynamicsModel):
    """
    Product of N decoupled 4D unicycles.

    Per player: d/dt [p_x, p_y, theta, v] = [v cos(theta), v sin(theta), omega, a].
    Headings are never wrapped.
    """

    def flow(self, x: np.ndarray, u: np.ndarray, t: int = 0) -> np.ndarray:
        xs = np.reshape(x, (self.num_players, STATE_DIM_PER_PLAYER))
        us = np.reshape(u, (self.num_players, CONTROL_DIM_PER_PLAYER))
        theta = xs[:, THETA]
        v = xs[:, V]
        xdot = np.empty_like(xs)
        xdot[:, PX] = v * np.cos(theta)
        xdot[:, PY] = v * np.sin(theta)
        xdot[:, THETA] = us[:, OMEGA]
        xdot[:, V] = us[:, ACCEL]
        return xdot.reshape(-1)

    def flow_jacobians(self, x: np.ndarray, u: np.ndarray, t: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        A = np.zeros((self.state_dim, self.state_dim))
        B = np.zeros((self.state_dim, self.control_dim))
        for i in range(self.num_players):
            s = STATE_DIM_PER_PLAYER * i
            c = CONTROL_DIM_PER_PLAYER * i
            theta = x[s + THETA]
            v = x[s + V]
            cos_t, sin_t = np.cos(theta), np.sin(theta)
            A[s + PX, s + THETA] = -v * sin_t
            A[s + PX, s + V] = cos_t
            A[s + PY, s + THETA] = v * cos_t
            A[s + PY, s + V] = sin_t
            B[s + THETA, c + OMEGA] = 1.0
            B[s + V, c + ACCEL] = 1.0
        return A, B


# =============================================================================
# Module Self-Test
# =============================================================================

if __name__ == "__main__":
    print("Testing UnicycleDynamics...")
    print("=" * 60)

    dynamics = UnicycleDynamics(num_players=1)
    x = np.array([0.0, 0.0, 0.0, 1.0])
    print(f"\n✓ flow([0,0,0,1], [0,0]) = {dynamics.flow(x, np.zeros(2))}")
    print(f"✓ integrate straight line, dt=0.1: {dynamics.integrate(x, np.zeros(2), 0.1)}")

    A, B = dynamics.linearize_step(x, np.array([1.0, 0.0]), 0.1)
    print(f"\n✓ discrete A:\n{A}")
    print(f"✓ discrete B:\n{B}")
    print("\n" + "=" * 60)
    print("All tests completed!")
