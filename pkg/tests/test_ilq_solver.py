"""
Tests for the iterative LQ game solver: rollouts, convergence, warm
starts and the local Nash property of converged solutions.
"""

import numpy as np
import pytest

from planner import ilq_solver
from planner.ilq_solver import SolveResult, SolverSettings, ilq_solve, rollout, verify_local_nash
from planner.inference import seed_profile
from planner.strategy import AffineStrategy, StrategyProfile, open_loop_profile, shift_profile
from simulator.cost import total_cost
from simulator.errors import DimensionError, DivergenceError
from simulator.game import GameDefinition

HORIZON = 20
DT = 0.1


def crossing_game(horizon=HORIZON):
    goals = [[1.5, 0.0, 0.0, 0.0], [0.0, 1.5, np.pi / 2, 0.0]]
    return GameDefinition.navigation(goals, horizon, DT)


def crossing_start():
    return np.array([-1.5, 0.0, 0.0, 1.0, 0.0, -1.5, np.pi / 2, 1.0])


def seed(betas, horizon=HORIZON):
    return seed_profile(np.asarray(betas, dtype=float), horizon, DT)


# =============================================================================
# Rollout
# =============================================================================

def test_rollout_with_zero_strategies_reproduces_reference():
    game = crossing_game()
    rng = np.random.default_rng(0)
    reference = game.dynamics.simulate(crossing_start(), 0.2 * rng.normal(size=(HORIZON, 4)), DT)
    zeros = [AffineStrategy.zeros(HORIZON, 2, 8) for _ in range(2)]
    trajectory = rollout(game.dynamics, crossing_start(), StrategyProfile(zeros, reference))
    assert np.array_equal(trajectory.controls, reference.controls)
    assert np.allclose(trajectory.states, reference.states, atol=1e-12)


def test_open_loop_rollout_matches_plain_integration():
    game = crossing_game()
    controls = np.tile([0.3, -0.1, -0.2, 0.4], (HORIZON, 1))
    trajectory = rollout(game.dynamics, crossing_start(), open_loop_profile(controls, 8, DT))
    expected = game.dynamics.simulate(crossing_start(), controls, DT)
    assert np.array_equal(trajectory.states, expected.states)


def test_feedback_acts_on_true_state():
    game = crossing_game()
    reference = game.dynamics.simulate(crossing_start(), np.zeros((HORIZON, 4)), DT)
    gains = np.zeros((HORIZON, 2, 8))
    gains[:, 1, 3] = 1.0  # player 0 brakes in proportion to its speed error
    strategies = [AffineStrategy(gains, np.zeros((HORIZON, 2))), AffineStrategy.zeros(HORIZON, 2, 8)]
    profile = StrategyProfile(strategies, reference)
    x = crossing_start().copy()
    x[3] += 0.5
    assert profile.control(0, 0, x)[1] == pytest.approx(-0.5)


# =============================================================================
# Solver
# =============================================================================

def test_single_player_improves_on_seed():
    game = GameDefinition.navigation([[2.0, 0.0, 0.0, 0.0]], HORIZON, DT)
    x0 = np.array([0.0, 0.0, 0.0, 0.5])
    warm = seed([[0.5, 0.3]])
    seed_cost = total_cost(game.costs[0], rollout(game.dynamics, x0, warm))
    result = ilq_solve(game, x0, warm)
    assert result.converged
    assert result.costs[0] <= seed_cost


def test_solve_is_deterministic():
    game = crossing_game()
    a = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]))
    b = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]))
    assert np.array_equal(a.trajectory.states, b.trajectory.states)
    assert a.iterations == b.iterations
    for sa, sb in zip(a.strategies, b.strategies):
        assert np.array_equal(sa.gains, sb.gains)


def test_result_trajectory_is_rollout_of_profile():
    game = crossing_game()
    result = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]))
    again = rollout(game.dynamics, crossing_start(), result.profile)
    assert np.allclose(again.states, result.trajectory.states, atol=1e-12)


def test_converged_warm_start_takes_one_iteration():
    game = crossing_game()
    first = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]))
    assert first.converged
    second = ilq_solve(game, crossing_start(), first.profile)
    assert second.converged
    assert second.iterations == 1


def test_warm_start_after_small_perturbation_is_faster():
    game = crossing_game()
    cold = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]))
    x1 = cold.trajectory.states[1] + 1e-3
    shifted = shift_profile(cold.profile, 1, game.dynamics)
    warm = ilq_solve(game, x1, shifted)
    assert warm.converged
    assert warm.iterations <= cold.iterations


def test_warm_start_from_perturbed_state_needs_quarter_of_cold_iterations():
    game = crossing_game()
    cold = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]))
    assert cold.converged
    warm = ilq_solve(game, crossing_start() + 1e-3, cold.profile)
    assert warm.converged
    assert 4 * warm.iterations <= cold.iterations


def test_tight_tolerance_converges_before_iteration_limit():
    game = crossing_game()
    settings = SolverSettings(convergence_tol=1e-3, max_iterations=200)
    result = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]), settings)
    assert result.converged
    assert result.iterations < settings.max_iterations


def test_diverging_steps_return_last_iterate(monkeypatch):
    game = crossing_game()
    warm = seed([[0.4, 0.2], [-0.3, 0.1]])
    expected = rollout(game.dynamics, crossing_start(), warm)
    calls = []

    def diverge_after_first(*args, **kwargs):
        calls.append(kwargs.get("step_size"))
        if len(calls) > 1:
            raise DivergenceError("forced", step=0)
        return rollout(*args, **kwargs)

    monkeypatch.setattr(ilq_solver, "rollout", diverge_after_first)
    result = ilq_solve(game, crossing_start(), warm)
    assert not result.converged
    assert result.iterations == 1
    assert np.array_equal(result.trajectory.states, expected.states)
    assert np.allclose(result.costs, game.evaluate_costs(expected))


def test_diverging_warm_start_raises():
    game = crossing_game()
    controls = np.tile([0.0, 1e7, 0.0, 1e7], (HORIZON, 1))
    with pytest.raises(DivergenceError):
        ilq_solve(game, crossing_start(), open_loop_profile(controls, 8, DT))


def test_horizon_mismatch_is_rejected():
    with pytest.raises(DimensionError):
        ilq_solve(crossing_game(), crossing_start(), seed([[0.0, 0.0], [0.0, 0.0]], horizon=HORIZON + 1))


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(step_size=1.5)
    with pytest.raises(ValueError):
        SolverSettings(backtracking_shrink=1.0)


# =============================================================================
# Local Nash check
# =============================================================================

def test_converged_solution_is_local_nash():
    game = crossing_game()
    settings = SolverSettings(convergence_tol=1e-4, max_iterations=300)
    result = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]), settings)
    assert result.converged
    report = verify_local_nash(game, result, trials=50, scale=1e-3)
    assert report.passed, report.min_deltas



def test_braking_deviation_fails_local_nash():
    game = crossing_game()
    settings = SolverSettings(convergence_tol=1e-4, max_iterations=300)
    result = ilq_solve(game, crossing_start(), seed([[0.4, 0.2], [-0.3, 0.1]]), settings)
    braking = result.strategies[0]
    feedforward = braking.feedforward.copy()
    feedforward[:, 1] += 1.0
    profile = result.profile.with_strategy(0, AffineStrategy(braking.gains.copy(), feedforward))
    trajectory = rollout(game.dynamics, crossing_start(), profile)
    deviated = SolveResult(profile, trajectory, False, 0, game.evaluate_costs(trajectory))
    report = verify_local_nash(game, deviated, trials=50, scale=1e-2)
    assert not report.passed
    assert report.min_deltas[0] < 0.0
