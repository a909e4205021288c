"""
Feedback strategies and strategy profiles.

A strategy is stored in deviation form about a reference trajectory:

    u_i(t) = u_ref_i(t) - P_i(t) (x(t) - x_ref(t)) - eta * alpha_i(t)

The reference is shared by all players of a profile, so a profile is the
complete persistent state of the iterative solver for one equilibrium.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from simulator.dynamics import DynamicsModel
from simulator.errors import DimensionError
from simulator.state_space import control_slice
from simulator.trajectory import Trajectory


@dataclass
class AffineStrategy:
    """
    Time-varying affine feedback law of one player.

    Attributes:
        gains: (H, m_i, n) feedback gains P_i(t)
        feedforward: (H, m_i) feedforward terms alpha_i(t)
    """

    gains: np.ndarray
    feedforward: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        self.feedforward = np.asarray(self.feedforward, dtype=float)
        if self.gains.ndim != 3 or self.feedforward.ndim != 2:
            raise DimensionError("gains must be (H, m, n) and feedforward (H, m)")
        if self.gains.shape[:2] != self.feedforward.shape:
            raise DimensionError(
                f"gains {self.gains.shape} do not match feedforward {self.feedforward.shape}"
            )

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.gains)) and np.all(np.isfinite(self.feedforward)))

    @classmethod
    def zeros(cls, horizon: int, control_dim: int, state_dim: int) -> "AffineStrategy":
        return cls(np.zeros((horizon, control_dim, state_dim)), np.zeros((horizon, control_dim)))


@dataclass
class StrategyProfile:
    """
    One strategy per player plus the reference trajectory they are expressed about.
    """

    strategies: List[AffineStrategy]
    reference: Trajectory

    def __post_init__(self):
        if len(self.strategies) != self.reference.num_players:
            raise DimensionError(
                f"{len(self.strategies)} strategies for {self.reference.num_players} players"
            )
        for strategy in self.strategies:
            if strategy.horizon != self.reference.horizon:
                raise DimensionError(
                    f"strategy horizon {strategy.horizon} != reference horizon {self.reference.horizon}"
                )

    @property
    def horizon(self) -> int:
        return self.reference.horizon

    @property
    def num_players(self) -> int:
        return len(self.strategies)

    def control(self, player: int, t: int, x: np.ndarray, step_size: float = 1.0) -> np.ndarray:
        """Control of `player` at step t for the actual state x."""
        strategy = self.strategies[player]
        u_ref = self.reference.controls[t, control_slice(player)]
        dx = np.asarray(x) - self.reference.states[t]
        return u_ref - strategy.gains[t] @ dx - step_size * strategy.feedforward[t]

    def joint_control(self, t: int, x: np.ndarray, step_size: float = 1.0) -> np.ndarray:
        return np.concatenate(
            [self.control(i, t, x, step_size) for i in range(self.num_players)]
        )

    def anchored(self) -> "StrategyProfile":
        """
        Same gains with the feedforward folded into the reference.

        Only meaningful when the reference is the rollout of this profile with
        step size 1; then rolling out the result reproduces the reference.
        """
        strategies = [
            AffineStrategy(s.gains.copy(), np.zeros_like(s.feedforward)) for s in self.strategies
        ]
        return StrategyProfile(strategies, self.reference)

    def with_strategy(self, player: int, strategy: AffineStrategy) -> "StrategyProfile":
        """New profile in which only `player`'s strategy is replaced."""
        strategies = list(self.strategies)
        strategies[player] = strategy
        return StrategyProfile(strategies, self.reference)


def open_loop_profile(controls: np.ndarray, state_dim: int, dt: float) -> StrategyProfile:
    """
    Open-loop profile (all gains zero) that applies `controls` when rolled out.

    Args:
        controls: (H, 2N) joint controls
        state_dim: joint state dimension 4N
        dt: step length
    """
    controls = np.asarray(controls, dtype=float)
    horizon, control_dim = controls.shape
    num_players = control_dim // 2
    reference = Trajectory(np.zeros((horizon + 1, state_dim)), np.zeros_like(controls), dt)
    strategies = []
    for i in range(num_players):
        block = controls[:, control_slice(i)]
        strategies.append(AffineStrategy(np.zeros((horizon, block.shape[1], state_dim)), -block))
    return StrategyProfile(strategies, reference)


def shift_profile(profile: StrategyProfile, steps: int, dynamics: DynamicsModel) -> StrategyProfile:
    """
    Advance a profile by `steps` for a receding-horizon warm start.

    The first `steps` stages are dropped. The tail is extended by repeating the
    last gain with zero feedforward, and the reference is extended by
    integrating zero control from its final state.
    """
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    if steps == 0:
        return profile
    horizon = profile.horizon
    steps = min(steps, horizon)
    reference = profile.reference
    dt = reference.dt

    states = list(reference.states[steps:])
    zero_control = np.zeros(reference.controls.shape[1])
    for t in range(steps):
        states.append(dynamics.integrate(states[-1], zero_control, dt, horizon + t))
    controls = np.concatenate(
        [reference.controls[steps:], np.zeros((steps, reference.controls.shape[1]))]
    )
    shifted_reference = Trajectory(np.array(states), controls, dt)

    strategies = []
    for strategy in profile.strategies:
        tail_gain = np.repeat(strategy.gains[-1:], steps, axis=0)
        gains = np.concatenate([strategy.gains[steps:], tail_gain])
        feedforward = np.concatenate(
            [strategy.feedforward[steps:], np.zeros((steps, strategy.feedforward.shape[1]))]
        )
        strategies.append(AffineStrategy(gains, feedforward))
    return StrategyProfile(strategies, shifted_reference)
