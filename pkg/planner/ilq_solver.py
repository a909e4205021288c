"""
Iterative LQ game solver.

Repeats three steps until the trajectory stops moving:
1. Roll out the current strategies on the nonlinear dynamics
2. Linearize the dynamics and quadraticize every player's cost along the rollout
3. Solve the resulting LQ game and step towards its strategies

The solver is deterministic: identical inputs give identical results, so the
warm-start profile identifies the equilibrium it converges to.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from simulator.cost import quadraticize, total_cost
from simulator.dynamics import DynamicsModel
from simulator.errors import DimensionError, DivergenceError, LQSolverError
from simulator.game import GameDefinition
from simulator.state_space import check_joint_state
from simulator.trajectory import Trajectory

from .lq_game import LQGameStage, NashCheckReport, perturb_strategy, solve_lq_game
from .strategy import AffineStrategy, StrategyProfile

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e6

# Regularization grows by this factor on every failed LQ solve
REGULARIZATION_GROWTH = 10.0
MAX_REGULARIZATION_ATTEMPTS = 5


@dataclass(frozen=True)
class SolverSettings:
    """
    Settings of the iterative LQ game solver.

    Attributes:
        max_iterations: outer iterations before giving up
        convergence_tol: max state change between iterations that counts as converged
        step_size: eta in (0, 1], scales the LQ feedforward update
        backtracking_shrink: factor applied to eta on a rejected step
        max_backtracks: rejected steps tolerated per iteration
        regularization: first value added to Q and R when an LQ stage is singular
    """

    max_iterations: int = 100
    convergence_tol: float = 1e-2
    step_size: float = 0.5
    backtracking_shrink: float = 0.5
    max_backtracks: int = 8
    regularization: float = 1e-4

    def __post_init__(self):
        if self.max_iterations < 1 or self.max_backtracks < 0:
            raise ValueError("max_iterations must be positive and max_backtracks nonnegative")
        if not 0 < self.step_size <= 1:
            raise ValueError(f"step_size must be in (0, 1], got {self.step_size}")
        if not 0 < self.backtracking_shrink < 1:
            raise ValueError(f"backtracking_shrink must be in (0, 1), got {self.backtracking_shrink}")
        if self.convergence_tol <= 0 or self.regularization <= 0:
            raise ValueError("convergence_tol and regularization must be positive")


@dataclass
class SolveResult:
    """
    Outcome of one iterative solve.

    Attributes:
        profile: converged strategies, anchored so that rolling them out from
            the initial state reproduces `trajectory`
        trajectory: closed-loop rollout of `profile`
        converged: whether the convergence test passed
        iterations: outer iterations performed
        costs: per-player total cost of `trajectory`
    """

    profile: StrategyProfile
    trajectory: Trajectory
    converged: bool
    iterations: int
    costs: np.ndarray

    @property
    def strategies(self) -> List[AffineStrategy]:
        return self.profile.strategies


def rollout(
    dynamics: DynamicsModel,
    x0: np.ndarray,
    profile: StrategyProfile,
    step_size: float = 1.0,
    divergence_threshold: float = DIVERGENCE_THRESHOLD,
) -> Trajectory:
    """
    Closed-loop simulation of a strategy profile.

    u_i(t) = u_ref_i(t) - P_i(t) (x(t) - x_ref(t)) - step_size * alpha_i(t)

    Raises:
        DivergenceError: if the state becomes non-finite or exceeds the threshold
    """
    x = check_joint_state(x0, dynamics.num_players, "x0")
    dt = profile.reference.dt
    horizon = profile.horizon
    states = np.empty((horizon + 1, dynamics.state_dim))
    controls = np.empty((horizon, dynamics.control_dim))
    states[0] = x
    for t in range(horizon):
        u = profile.joint_control(t, x, step_size)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"non-finite control at step {t}", step=t)
        x = dynamics._rk4(x, u, dt, t)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > divergence_threshold:
            raise DivergenceError(f"rollout diverged at step {t}", step=t)
        controls[t] = u
        states[t + 1] = x
    return Trajectory(states, controls, dt)


def build_lq_game(game: GameDefinition, nominal: Trajectory, regularization: float = 0.0):
    """
    LQ approximation of the game along `nominal`.

    Running costs are weighted by dt; the terminal model is not.

    Returns:
        (stages, terminal_costs)
    """
    linearized = game.dynamics.linearize(nominal)
    models = [quadraticize(cost, nominal) for cost in game.costs]
    stages = []
    for t in range(nominal.horizon):
        costs = [models[i][t].scaled(nominal.dt) for i in range(game.num_players)]
        stages.append(LQGameStage(linearized[t], costs))
    terminal = [models[i][nominal.horizon] for i in range(game.num_players)]

    if regularization > 0:
        for stage in stages:
            for i, c in enumerate(stage.costs):
                c.Q = c.Q + regularization * np.eye(c.Q.shape[0])
                c.Rs[i] = c.Rs[i] + regularization * np.eye(c.Rs[i].shape[0])
        for c in terminal:
            c.Q = c.Q + regularization * np.eye(c.Q.shape[0])
    return stages, terminal


def _solve_regularized(game: GameDefinition, nominal: Trajectory, settings: SolverSettings):
    regularization = 0.0
    for attempt in range(MAX_REGULARIZATION_ATTEMPTS + 1):
        stages, terminal = build_lq_game(game, nominal, regularization)
        try:
            return solve_lq_game(stages, terminal)
        except LQSolverError as err:
            if attempt == MAX_REGULARIZATION_ATTEMPTS:
                raise
            regularization = (
                settings.regularization if regularization == 0.0 else regularization * REGULARIZATION_GROWTH
            )
            logger.debug("%s; retrying with regularization %.1e", err, regularization)


def _summed_cost(game: GameDefinition, trajectory: Trajectory) -> float:
    return float(sum(total_cost(cost, trajectory) for cost in game.costs))


def _max_change(a: Trajectory, b: Trajectory) -> float:
    return float(np.abs(a.states - b.states).max())


def ilq_solve(
    game: GameDefinition,
    x0: np.ndarray,
    warm_start: StrategyProfile,
    settings: Optional[SolverSettings] = None,
) -> SolveResult:
    """
    Find an approximate local Nash equilibrium starting from `warm_start`.

    Args:
        game: game definition (its horizon must match the warm start)
        x0: initial joint state
        warm_start: initial strategy profile
        settings: solver settings, defaults to SolverSettings()

    Returns:
        SolveResult; converged=True once an accepted step moves the trajectory
        by less than convergence_tol, converged=False if max_iterations was
        reached or every step length of an iteration diverged (the last
        finite iterate is returned)

    Raises:
        DivergenceError: if the warm start itself diverges
        LQSolverError: if an LQ approximation stays singular after regularization
    """
    settings = settings or SolverSettings()
    if warm_start.horizon != game.horizon_steps:
        raise DimensionError(
            f"warm start horizon {warm_start.horizon} != game horizon {game.horizon_steps}"
        )
    x0 = check_joint_state(x0, game.num_players, "x0")
    dynamics = game.dynamics

    current = rollout(dynamics, x0, warm_start, step_size=1.0)
    current_cost = _summed_cost(game, current)
    gains_profile = warm_start
    converged = False
    iterations = 0

    for iteration in range(1, settings.max_iterations + 1):
        iterations = iteration
        strategies = _solve_regularized(game, current, settings)
        candidate_profile = StrategyProfile(strategies, current)

        eta = settings.step_size
        accepted = None
        for backtrack in range(settings.max_backtracks + 1):
            try:
                candidate = rollout(dynamics, x0, candidate_profile, step_size=eta)
            except DivergenceError:
                logger.debug("iteration %d: step %.3g diverged", iteration, eta)
                eta *= settings.backtracking_shrink
                continue

            candidate_cost = _summed_cost(game, candidate)
            if _max_change(candidate, current) < settings.convergence_tol:
                accepted = candidate
                break
            if candidate_cost <= current_cost or backtrack == settings.max_backtracks:
                accepted = candidate
                break
            logger.debug(
                "iteration %d: cost %.6g -> %.6g, shrinking step %.3g",
                iteration, current_cost, candidate_cost, eta,
            )
            eta *= settings.backtracking_shrink

        if accepted is None:
            logger.warning("iteration %d: every step length diverged, keeping last iterate", iteration)
            break

        change = _max_change(accepted, current)
        current = accepted
        current_cost = _summed_cost(game, current)
        gains_profile = candidate_profile
        logger.debug("iteration %d: change %.3e, summed cost %.6g", iteration, change, current_cost)

        if change < settings.convergence_tol:
            converged = True
            break

    if not converged:
        logger.warning("iLQ solve did not converge after %d iterations", iterations)

    profile = StrategyProfile(
        [AffineStrategy(s.gains.copy(), np.zeros_like(s.feedforward)) for s in gains_profile.strategies],
        current,
    )
    return SolveResult(
        profile=profile,
        trajectory=current,
        converged=converged,
        iterations=iterations,
        costs=game.evaluate_costs(current),
    )


# =============================================================================
# Nash Verification
# =============================================================================

def verify_local_nash(
    game: GameDefinition,
    result: SolveResult,
    trials: int = 50,
    scale: float = 1e-3,
    tolerance: float = 1e-3,
    rng_seed: int = 0,
) -> NashCheckReport:
    """
    Check that no small unilateral change of strategy lowers a player's cost.

    Each trial perturbs the gains and feedforward terms of one player only,
    rolls the profile out on the nonlinear dynamics and compares total cost.
    The check passes if no improvement exceeds `tolerance` relative to the
    player's nominal cost.
    """
    rng = np.random.default_rng(rng_seed)
    x0 = result.trajectory.initial_state
    profile = result.profile
    nominal = result.costs

    min_deltas = []
    passed = True
    for i in range(game.num_players):
        smallest = np.inf
        for _ in range(trials):
            trial = profile.with_strategy(i, perturb_strategy(profile.strategies[i], rng, scale))
            try:
                trajectory = rollout(game.dynamics, x0, trial)
            except DivergenceError:
                continue
            delta = total_cost(game.costs[i], trajectory) - nominal[i]
            smallest = min(smallest, float(delta))
        min_deltas.append(smallest)
        if smallest < -tolerance * max(abs(float(nominal[i])), np.finfo(float).tiny):
            passed = False

    return NashCheckReport(
        passed=passed,
        min_deltas=min_deltas,
        nominal_costs=[float(c) for c in nominal],
        tolerance=tolerance,
        relative=True,
        trials=trials,
        scale=scale,
    )
