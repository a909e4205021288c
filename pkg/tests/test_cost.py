"""
Tests for the per-player navigation cost and its quadratic models.
"""

import numpy as np
import pytest

from simulator.cost import PlayerCost, project_psd, quadraticize, total_cost
from simulator.dynamics import UnicycleDynamics
from simulator.game import GameDefinition


def _cost(player=0, num_players=2, horizon=10, **weights):
    goals = [[3.0, 0.0, 0.0, 0.0], [0.0, 3.0, 0.0, 0.0], [-3.0, 0.0, 0.0, 0.0]]
    return PlayerCost(player=player, num_players=num_players, goal=goals[player], horizon_steps=horizon, **weights)


def _state_part(cost, t, x):
    return cost.velocity_cost(x) + cost.proximity_cost(x) if t < cost.horizon_steps else cost.terminal_cost(x)


def test_running_cost_example():
    cost = _cost()
    x = np.array([0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0])
    u = np.array([1.0, 2.0, 5.0, 5.0])
    # control 1 + 4, velocity 0.1 * 1, proximity 50 * 0.25^2
    assert cost.running_cost(0, x, u) == pytest.approx(5.0 + 0.1 + 3.125)


def test_proximity_inactive_beyond_threshold():
    cost = _cost()
    x = np.array([0.0, 0.0, 0.0, 0.0, 0.75, 0.0, 0.0, 0.0])
    assert cost.proximity_cost(x) == 0.0


def test_terminal_step_charges_goal_only():
    cost = _cost(horizon=5)
    x = np.array([1.0, 0.0, 0.0, 2.0, 0.1, 0.0, 0.0, 0.0])
    # (1 - 3)^2 + 2^2 = 8
    assert cost.running_cost(5, x, np.ones(4)) == pytest.approx(80.0)


def test_total_cost_is_dt_weighted_sum_plus_terminal():
    dynamics = UnicycleDynamics(2)
    rng = np.random.default_rng(1)
    trajectory = dynamics.simulate(rng.normal(size=8), 0.3 * rng.normal(size=(6, 4)), 0.1)
    cost = _cost(horizon=6)
    expected = 0.1 * sum(
        cost.running_cost(t, trajectory.states[t], trajectory.controls[t]) for t in range(6)
    ) + cost.terminal_cost(trajectory.final_state)
    assert total_cost(cost, trajectory) == pytest.approx(expected, rel=1e-12)


def test_scaled_cost_scales_every_term():
    cost = _cost()
    x = np.array([0.0, 0.0, 0.0, 1.0, 0.3, 0.2, 0.0, 0.5])
    u = np.array([0.4, -0.2, 0.0, 0.0])
    assert cost.scaled(3.0).running_cost(0, x, u) == pytest.approx(3.0 * cost.running_cost(0, x, u))
    assert cost.scaled(3.0).terminal_cost(x) == pytest.approx(3.0 * cost.terminal_cost(x))


@pytest.mark.parametrize("t", [0, 10])
def test_state_derivatives_match_finite_differences(t):
    rng = np.random.default_rng(7)
    cost = _cost(player=1, num_players=3)
    eps = 1e-6
    for _ in range(100):
        # players close together so the proximity term is active
        x = 0.3 * rng.normal(size=12)
        l, Q = cost.state_derivatives(t, x)
        grad_fd = np.zeros(12)
        hess_fd = np.zeros((12, 12))
        for k in range(12):
            dx = np.zeros(12)
            dx[k] = eps
            grad_fd[k] = (_state_part(cost, t, x + dx) - _state_part(cost, t, x - dx)) / (2 * eps)
            hess_fd[:, k] = (cost.state_derivatives(t, x + dx)[0] - cost.state_derivatives(t, x - dx)[0]) / (2 * eps)
        assert np.allclose(l, grad_fd, rtol=1e-5, atol=1e-5)
        assert np.allclose(Q, hess_fd, rtol=1e-5, atol=1e-4)


def test_control_terms_are_exact():
    cost = _cost()
    u = np.array([0.7, -0.3, 2.0, 2.0])
    model = cost.quadraticize_point(0, np.zeros(8), u, regularize=False)
    assert np.allclose(model.Rs[0], 2.0 * np.eye(2))
    assert np.allclose(model.rs[0], 2.0 * u[:2])
    assert np.all(model.Rs[1] == 0.0) and np.all(model.rs[1] == 0.0)


def test_regularized_models_are_psd():
    rng = np.random.default_rng(2)
    cost = _cost(num_players=3)
    for _ in range(20):
        model = cost.quadraticize_point(0, 0.3 * rng.normal(size=12), rng.normal(size=6))
        assert np.linalg.eigvalsh(model.Q).min() >= -1e-10
        assert np.linalg.eigvalsh(model.Rs[0]).min() > 0.0


def test_project_psd_keeps_psd_matrices():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(project_psd(m), m)
    clamped = project_psd(np.array([[1.0, 0.0], [0.0, -1.0]]))
    assert np.allclose(clamped, np.diag([1.0, 0.0]))


def test_quadraticize_returns_terminal_model():
    dynamics = UnicycleDynamics(2)
    trajectory = dynamics.simulate(np.zeros(8), np.zeros((4, 4)), 0.1)
    models = quadraticize(_cost(horizon=4), trajectory)
    assert len(models) == 5
    assert np.allclose(models[-1].Q[:4, :4], 20.0 * np.eye(4))


def test_game_aligns_cost_horizons():
    game = GameDefinition.navigation([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]], horizon_steps=7, dt=0.1)
    assert all(c.horizon_steps == 7 for c in game.costs)
    assert game.with_horizon(3).costs[0].horizon_steps == 3


# =============================================================================
# Exactness and Degenerate Configurations
# =============================================================================

@pytest.mark.parametrize("t", [0, 4, 10])
def test_quadratic_model_is_exact_without_proximity(t):
    rng = np.random.default_rng(7)
    cost = _cost(player=1, horizon=10, weight_proximity=0.0, reference_speed=0.4)
    x = rng.normal(size=8)
    u = rng.normal(size=4) if t < 10 else None
    model = cost.quadraticize_point(t, x, u, regularize=False)
    block = slice(2, 4)
    for _ in range(5):
        dx = rng.normal(size=8)
        du = rng.normal(size=4)
        predicted = cost.running_cost(t, x, u) + model.l @ dx + 0.5 * dx @ model.Q @ dx
        if u is not None:
            predicted += model.rs[1] @ du[block] + 0.5 * du[block] @ model.Rs[1] @ du[block]
        actual = cost.running_cost(t, x + dx, None if u is None else u + du)
        assert actual == pytest.approx(predicted, rel=0.0, abs=1e-10)


def test_idle_far_apart_players_cost_nothing():
    cost = _cost()
    x = np.array([0.0, 0.0, 0.3, 0.0, 5.0, 5.0, 0.0, 2.0])
    assert cost.running_cost(0, x, np.zeros(4)) == 0.0


def test_coincident_players_pay_full_proximity_penalty():
    x = np.array([1.0, 1.0, 0.0, 0.0, 1.0, 1.0, np.pi, 0.0])
    for player in range(2):
        cost = _cost(player=player)
        # 50 * 0.75^2
        assert cost.proximity_cost(x) == pytest.approx(28.125)


def test_coincident_players_get_isotropic_curvature():
    cost = _cost()
    x = np.array([1.0, 1.0, 0.0, 0.0, 1.0, 1.0, np.pi, 0.0])
    l, Q = cost.state_derivatives(0, x)
    positions = [0, 1, 4, 5]
    assert np.allclose(l[positions], 0.0)
    assert np.allclose(Q[np.ix_([0, 1], [0, 1])], 100.0 * np.eye(2))
    assert np.allclose(Q[np.ix_([0, 1], [4, 5])], -100.0 * np.eye(2))
    model = cost.quadraticize_point(0, x, np.zeros(4))
    assert np.linalg.eigvalsh(model.Q).min() >= -1e-12
    assert np.all(np.isfinite(model.Q))
