"""
Finite-horizon, discrete-time N-player LQ games.

Feedback Nash strategies are found with the coupled Riccati recursion:
at every step the first-order conditions of all players are stacked into
one block-linear system in all gains, solved jointly, and each player's
value function is propagated one step back.

Stage model (deviation coordinates):

    dx[t + 1] = A dx[t] + sum_j B_j du_j[t]
    cost_i[t] = 1/2 dx'Q_i dx + l_i'dx + sum_j (1/2 du_j'R_ij du_j + r_ij'du_j)
    du_j[t]   = -P_j[t] dx[t] - alpha_j[t]
"""

import logging
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg

from simulator.cost import QuadraticCostApprox
from simulator.dynamics import LinearizedDynamics
from simulator.errors import LQSolverError

from .strategy import AffineStrategy

logger = logging.getLogger(__name__)


@dataclass
class LQGameStage:
    """Linear dynamics of one step plus every player's quadratic cost at that step."""

    dynamics: LinearizedDynamics
    costs: List[QuadraticCostApprox]


@dataclass
class LQGameSolution:
    """
    Output of the coupled recursion.

    Attributes:
        strategies: one AffineStrategy per player
        value_matrices: per player, Z_i(t) for t = 0..H
        value_vectors: per player, zeta_i(t) for t = 0..H
        max_asymmetry: largest relative asymmetry of any Z before symmetrization
    """

    strategies: List[AffineStrategy]
    value_matrices: List[List[np.ndarray]]
    value_vectors: List[List[np.ndarray]]
    max_asymmetry: float


@dataclass
class NashCheckReport:
    """
    Result of a unilateral-perturbation check.

    Attributes:
        passed: no perturbation improved any player's cost beyond the tolerance
        min_deltas: per player, smallest observed cost change (perturbed - nominal)
        nominal_costs: per player, cost of the unperturbed profile
        tolerance: allowed improvement (absolute, or relative to the nominal cost)
        relative: whether the tolerance is relative
        trials: perturbations per player
        scale: perturbation magnitude
    """

    passed: bool
    min_deltas: List[float]
    nominal_costs: List[float]
    tolerance: float
    relative: bool
    trials: int
    scale: float


def coupled_riccati_recursion(
    stages: Sequence[LQGameStage],
    terminal_costs: Optional[Sequence[QuadraticCostApprox]] = None,
    allow_lstsq: bool = False,
) -> LQGameSolution:
    """
    Backward recursion for the feedback Nash equilibrium of an LQ game.

    Args:
        stages: one LQGameStage per control step
        terminal_costs: per-player cost on the final state (zero if None)
        allow_lstsq: fall back to least squares on singular stage systems
            instead of raising

    Returns:
        LQGameSolution with gains and feedforward terms for every player

    Raises:
        LQSolverError: if a stacked stage system is singular
    """
    horizon = len(stages)
    if horizon == 0:
        raise ValueError("an LQ game needs at least one stage")
    first = stages[0]
    num_players = len(first.dynamics.Bs)
    state_dim = first.dynamics.A.shape[0]
    u_dims = [B.shape[1] for B in first.dynamics.Bs]
    splits = np.cumsum(u_dims)[:-1]

    if terminal_costs is None:
        Z = [np.zeros((state_dim, state_dim)) for _ in range(num_players)]
        zeta = [np.zeros(state_dim) for _ in range(num_players)]
    else:
        Z = [np.array(c.Q, dtype=float) for c in terminal_costs]
        zeta = [np.array(c.l, dtype=float) for c in terminal_costs]

    gains = [[None] * horizon for _ in range(num_players)]
    feedforward = [[None] * horizon for _ in range(num_players)]
    value_matrices = [[None] * (horizon + 1) for _ in range(num_players)]
    value_vectors = [[None] * (horizon + 1) for _ in range(num_players)]
    for i in range(num_players):
        value_matrices[i][horizon] = Z[i]
        value_vectors[i][horizon] = zeta[i]
    max_asymmetry = 0.0

    for t in range(horizon - 1, -1, -1):
        stage = stages[t]
        A = stage.dynamics.A
        B = stage.dynamics.Bs
        Q = [c.Q for c in stage.costs]
        l = [c.l for c in stage.costs]
        R = [c.Rs for c in stage.costs]
        r = [c.rs for c in stage.costs]

        # Row block i holds player i's first-order condition.
        S = np.block([
            [(R[i][i] if i == j else 0.0) + B[i].T @ Z[i] @ B[j] for j in range(num_players)]
            for i in range(num_players)
        ])
        Y_gain = np.concatenate([B[i].T @ Z[i] @ A for i in range(num_players)], axis=0)
        Y_ff = np.concatenate([B[i].T @ zeta[i] + r[i][i] for i in range(num_players)])

        P, alpha = _solve_stage(S, Y_gain, Y_ff, t, allow_lstsq)
        P_split = np.split(P, splits, axis=0)
        alpha_split = np.split(alpha, splits)

        F = A - sum(B[j] @ P_split[j] for j in range(num_players))
        beta = -sum(B[j] @ alpha_split[j] for j in range(num_players))

        for i in range(num_players):
            gains[i][t] = P_split[i]
            feedforward[i][t] = alpha_split[i]

            Z_next = F.T @ Z[i] @ F + Q[i] + sum(
                P_split[j].T @ R[i][j] @ P_split[j] for j in range(num_players)
            )
            scale = max(np.abs(Z_next).max(), 1e-300)
            max_asymmetry = max(max_asymmetry, float(np.abs(Z_next - Z_next.T).max() / scale))
            Z_next = 0.5 * (Z_next + Z_next.T)

            zeta_next = F.T @ (zeta[i] + Z[i] @ beta) + l[i] + sum(
                P_split[j].T @ (R[i][j] @ alpha_split[j] - r[i][j]) for j in range(num_players)
            )
            Z[i] = Z_next
            zeta[i] = zeta_next
            value_matrices[i][t] = Z_next
            value_vectors[i][t] = zeta_next

    strategies = [
        AffineStrategy(np.array(gains[i]), np.array(feedforward[i])) for i in range(num_players)
    ]
    return LQGameSolution(strategies, value_matrices, value_vectors, max_asymmetry)


def _solve_stage(S, Y_gain, Y_ff, t: int, allow_lstsq: bool):
    rhs = np.column_stack([Y_gain, Y_ff])
    try:
        with warnings.catch_warnings():
            # a singular diagonal S only warns and returns inf
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            solution = linalg.solve(S, rhs, check_finite=True)
        if not np.all(np.isfinite(solution)):
            raise linalg.LinAlgError("stage solution is not finite")
    except (linalg.LinAlgError, ValueError) as err:
        if not allow_lstsq:
            raise LQSolverError(f"singular coupled stage system: {err}", step=t) from err
        logger.debug("stage %d singular, using least squares", t)
        solution = np.linalg.lstsq(S, rhs, rcond=None)[0]
    return solution[:, :-1], solution[:, -1]


def solve_lq_game(
    stages: Sequence[LQGameStage],
    terminal_costs: Optional[Sequence[QuadraticCostApprox]] = None,
    allow_lstsq: bool = False,
) -> List[AffineStrategy]:
    """
    Feedback Nash strategies of an LQ game.

    Returns:
        One AffineStrategy per player, in deviation coordinates:
        du_i[t] = -P_i[t] dx[t] - alpha_i[t]
    """
    return coupled_riccati_recursion(stages, terminal_costs, allow_lstsq).strategies


# =============================================================================
# Nash Verification
# =============================================================================

def lq_player_costs(
    stages: Sequence[LQGameStage],
    terminal_costs: Optional[Sequence[QuadraticCostApprox]],
    strategies: Sequence[AffineStrategy],
    x0: np.ndarray,
) -> np.ndarray:
    """Cost of every player when all play `strategies` on the linear dynamics from x0."""
    num_players = len(strategies)
    x = np.asarray(x0, dtype=float)
    costs = np.zeros(num_players)
    for t, stage in enumerate(stages):
        us = [-s.gains[t] @ x - s.feedforward[t] for s in strategies]
        for i, c in enumerate(stage.costs):
            costs[i] += 0.5 * x @ c.Q @ x + c.l @ x
            for j in range(num_players):
                costs[i] += 0.5 * us[j] @ c.Rs[j] @ us[j] + c.rs[j] @ us[j]
        x = stage.dynamics.A @ x + sum(B @ u for B, u in zip(stage.dynamics.Bs, us))
    if terminal_costs is not None:
        for i, c in enumerate(terminal_costs):
            costs[i] += 0.5 * x @ c.Q @ x + c.l @ x
    return costs


def perturb_strategy(strategy: AffineStrategy, rng: np.random.Generator, scale: float) -> AffineStrategy:
    """Copy of `strategy` with Gaussian noise of std `scale` on gains and feedforward."""
    return AffineStrategy(
        strategy.gains + scale * rng.standard_normal(strategy.gains.shape),
        strategy.feedforward + scale * rng.standard_normal(strategy.feedforward.shape),
    )


def verify_lq_nash(
    stages: Sequence[LQGameStage],
    strategies: Sequence[AffineStrategy],
    terminal_costs: Optional[Sequence[QuadraticCostApprox]] = None,
    trials: int = 100,
    scale: float = 1e-3,
    x0: Optional[np.ndarray] = None,
    tolerance: float = 1e-6,
    rng_seed: int = 0,
) -> NashCheckReport:
    """
    Check that no unilateral perturbation improves any player's LQ cost.

    Args:
        x0: initial deviation; defaults to zeros
        tolerance: largest allowed absolute improvement
    """
    rng = np.random.default_rng(rng_seed)
    state_dim = stages[0].dynamics.A.shape[0]
    x0 = np.zeros(state_dim) if x0 is None else np.asarray(x0, dtype=float)
    nominal = lq_player_costs(stages, terminal_costs, strategies, x0)

    min_deltas = []
    for i in range(len(strategies)):
        smallest = np.inf
        for _ in range(trials):
            trial = list(strategies)
            trial[i] = perturb_strategy(strategies[i], rng, scale)
            perturbed = lq_player_costs(stages, terminal_costs, trial, x0)
            smallest = min(smallest, float(perturbed[i] - nominal[i]))
        min_deltas.append(smallest)

    passed = all(delta >= -tolerance for delta in min_deltas)
    return NashCheckReport(
        passed=passed,
        min_deltas=min_deltas,
        nominal_costs=nominal.tolist(),
        tolerance=tolerance,
        relative=False,
        trials=trials,
        scale=scale,
    )
