"""
Tests for the joint unicycle dynamics: flow, RK4 integration and the
analytic Jacobians of the discrete step.
"""

import numpy as np
import pytest

from simulator.dynamics import UnicycleDynamics
from simulator.errors import DimensionError, NonFiniteError


def _fd_jacobians(dynamics, x, u, dt, eps=1e-6):
    A = np.zeros((x.size, x.size))
    B = np.zeros((x.size, u.size))
    for k in range(x.size):
        dx = np.zeros_like(x)
        dx[k] = eps
        A[:, k] = (dynamics.integrate(x + dx, u, dt) - dynamics.integrate(x - dx, u, dt)) / (2 * eps)
    for k in range(u.size):
        du = np.zeros_like(u)
        du[k] = eps
        B[:, k] = (dynamics.integrate(x, u + du, dt) - dynamics.integrate(x, u - du, dt)) / (2 * eps)
    return A, B


def test_flow_straight_line():
    dynamics = UnicycleDynamics(num_players=1)
    xdot = dynamics.flow(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(2))
    assert xdot.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_flow_heading_and_controls():
    dynamics = UnicycleDynamics(num_players=1)
    xdot = dynamics.flow(np.array([0.0, 0.0, np.pi / 2, 2.0]), np.array([0.5, -1.0]))
    assert xdot == pytest.approx([0.0, 2.0, 0.5, -1.0], abs=1e-12)


def test_integrate_constant_speed():
    dynamics = UnicycleDynamics(num_players=1)
    x = dynamics.integrate(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(2), 0.1)
    assert x == pytest.approx([0.1, 0.0, 0.0, 1.0], abs=1e-15)


def test_integrate_constant_acceleration_is_exact():
    # Position is quadratic in time, which RK4 integrates exactly.
    dynamics = UnicycleDynamics(num_players=1)
    x = dynamics.integrate(np.array([0.0, 0.0, 0.0, 1.0]), np.array([0.0, 2.0]), 0.5)
    assert x == pytest.approx([0.75, 0.0, 0.0, 2.0], abs=1e-12)


def test_integrate_constant_turn_matches_arc():
    dynamics = UnicycleDynamics(num_players=1)
    omega, v, dt = 1.0, 1.0, 0.1
    x = dynamics.integrate(np.array([0.0, 0.0, 0.0, v]), np.array([omega, 0.0]), dt)
    exact = [v / omega * np.sin(omega * dt), v / omega * (1 - np.cos(omega * dt)), omega * dt, v]
    assert x == pytest.approx(exact, abs=1e-8)


def test_local_error_is_fifth_order():
    dynamics = UnicycleDynamics(num_players=1)
    x0 = np.array([0.0, 0.0, 0.0, 1.0])
    u = np.array([1.0, 0.0])

    def error(dt):
        x = dynamics.integrate(x0, u, dt)
        return abs(x[0] - np.sin(dt))

    ratio = error(0.2) / error(0.1)
    assert 20 < ratio < 45


def test_players_are_decoupled():
    dynamics = UnicycleDynamics(num_players=2)
    x = np.array([0.0, 0.0, 0.3, 1.0, 1.0, 1.0, -0.5, 0.5])
    u = np.array([0.1, 0.2, 0.0, 0.0])
    u_other = u.copy()
    u_other[2:] = [1.0, -1.0]
    a = dynamics.integrate(x, u, 0.1)
    b = dynamics.integrate(x, u_other, 0.1)
    assert np.array_equal(a[:4], b[:4])
    assert not np.array_equal(a[4:], b[4:])


def test_integrate_is_deterministic():
    dynamics = UnicycleDynamics(num_players=3)
    rng = np.random.default_rng(3)
    x, u = rng.normal(size=12), rng.normal(size=6)
    assert np.array_equal(dynamics.integrate(x, u, 0.1), dynamics.integrate(x, u, 0.1))


def test_linearize_step_matches_finite_differences():
    dynamics = UnicycleDynamics(num_players=2)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=8)
        u = rng.normal(size=4)
        A, B = dynamics.linearize_step(x, u, 0.1)
        A_fd, B_fd = _fd_jacobians(dynamics, x, u, 0.1)
        assert np.allclose(A, A_fd, rtol=1e-5, atol=1e-7)
        assert np.allclose(B, B_fd, rtol=1e-5, atol=1e-7)


def test_input_jacobian_is_block_structured():
    dynamics = UnicycleDynamics(num_players=2)
    _, B = dynamics.linearize_step(np.array([0.0, 0.0, 0.2, 1.0, 1.0, 0.0, 1.0, 0.5]), np.ones(4), 0.1)
    B0, B1 = dynamics.split_input_jacobian(B)
    assert B0.shape == (8, 2) and B1.shape == (8, 2)
    assert np.all(B0[4:] == 0.0)
    assert np.all(B1[:4] == 0.0)


def test_simulate_shapes():
    dynamics = UnicycleDynamics(num_players=2)
    trajectory = dynamics.simulate(np.zeros(8), np.zeros((5, 4)), 0.1)
    assert trajectory.states.shape == (6, 8)
    assert trajectory.controls.shape == (5, 4)
    assert trajectory.horizon == 5


def test_integrate_rejects_bad_input():
    dynamics = UnicycleDynamics(num_players=2)
    with pytest.raises(DimensionError):
        dynamics.integrate(np.zeros(4), np.zeros(4), 0.1)
    with pytest.raises(NonFiniteError):
        dynamics.integrate(np.array([np.nan] + [0.0] * 7), np.zeros(4), 0.1)
    with pytest.raises(ValueError):
        dynamics.integrate(np.zeros(8), np.zeros(4), 0.0)
