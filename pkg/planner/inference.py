"""
Particle approximation of the belief over which equilibrium the players follow.

Every particle is one strategy profile found by the iterative solver from a
randomly sampled seed. At each step a particle is re-solved from the previous
state (warm-started with its own strategies), used to predict the current
state, and reweighted by how well that prediction matches the observation.
Particles that reach the same equilibrium are merged; particles whose weight
underflows are dropped. There is no resampling, so the particle count never
grows.

Weights are kept in the log domain.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from simulator.dynamics import DynamicsModel
from simulator.errors import DivergenceError, EstimatorCollapseError, LQSolverError
from simulator.game import GameDefinition
from simulator.state_space import CONTROL_DIM_PER_PLAYER, STATE_DIM_PER_PLAYER, control_slice, position_indices

from .ilq_solver import SolveResult, SolverSettings, ilq_solve
from .strategy import AffineStrategy, StrategyProfile, open_loop_profile, shift_profile

logger = logging.getLogger(__name__)

# Particles this far below the best log-weight are removed
PRUNE_LOG_RATIO = 700.0


@dataclass
class Particle:
    """
    One hypothesis about the equilibrium being played.

    Attributes:
        id: stable identifier, unique within a belief
        profile: strategies of the most recent re-solve
        last_result: that re-solve (None if the particle was never solved)
        log_weight: unnormalized log-weight, -inf once eliminated
        solved_at: time index of the state the profile was solved from
    """

    id: int
    profile: StrategyProfile
    last_result: Optional[SolveResult] = None
    log_weight: float = 0.0
    solved_at: int = 0

    @property
    def alive(self) -> bool:
        return self.log_weight > -np.inf

    def strategy(self, player: int) -> AffineStrategy:
        return self.profile.strategies[player]


@dataclass
class Belief:
    """Weighted particle set."""

    particles: List[Particle] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.particles)

    @property
    def ids(self) -> List[int]:
        return [p.id for p in self.particles]

    def log_weights(self) -> np.ndarray:
        return np.array([p.log_weight for p in self.particles], dtype=float)

    def normalized_weights(self) -> np.ndarray:
        """
        Weights that sum to one.

        Raises:
            EstimatorCollapseError: if the belief is empty or every weight is zero
        """
        log_w = self.log_weights()
        if log_w.size == 0 or not np.any(log_w > -np.inf):
            raise EstimatorCollapseError("every particle has been eliminated")
        return np.exp(log_w - logsumexp(log_w))

    def get(self, particle_id: int) -> Particle:
        for particle in self.particles:
            if particle.id == particle_id:
                return particle
        raise KeyError(particle_id)

    def snapshot(self) -> Dict[str, Any]:
        """Read-only summary for archiving: ids, log-weights and normalized weights."""
        return {
            "ids": self.ids,
            "log_weights": self.log_weights().tolist(),
            "weights": self.normalized_weights().tolist(),
        }


@dataclass(frozen=True)
class SeedDistribution:
    """
    Uniform ranges of the s-shaped seed controls.

    Attributes:
        beta_omega: (low, high) turn-rate amplitude in rad/s
        beta_a: (low, high) acceleration amplitude in m/s^2
    """

    beta_omega: Tuple[float, float] = (-1.5, 1.5)
    beta_a: Tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        for name in ("beta_omega", "beta_a"):
            low, high = getattr(self, name)
            if not (np.isfinite(low) and np.isfinite(high)) or low > high:
                raise ValueError(f"{name} must be a finite interval with low <= high, got {(low, high)}")


# =============================================================================
# Seeds
# =============================================================================

def seed_control_at(beta_omega: float, beta_a: float, time: float, duration: float) -> np.ndarray:
    """
    Seed control [beta_omega cos(pi t / T), beta_a cos(pi t / T)] at time t.

    Examples:
        >>> seed_control_at(1.0, 0.5, 0.0, 10.0).tolist()
        [1.0, 0.5]
    """
    shape = np.cos(np.pi * time / duration)
    return np.array([beta_omega * shape, beta_a * shape])


def sample_seed_parameters(
    distribution: SeedDistribution, num_samples: int, num_players: int, rng
) -> np.ndarray:
    """
    Independent uniform seed amplitudes.

    Returns:
        (K, N, 2) array of [beta_omega, beta_a] per sample and player
    """
    if num_samples < 1:
        raise ValueError(f"need at least one seed, got {num_samples}")
    rng = np.random.default_rng(rng)
    omega = rng.uniform(*distribution.beta_omega, size=(num_samples, num_players))
    accel = rng.uniform(*distribution.beta_a, size=(num_samples, num_players))
    return np.stack([omega, accel], axis=-1)


def seed_profile(betas: np.ndarray, horizon_steps: int, dt: float) -> StrategyProfile:
    """Open-loop profile applying the s-shaped seed controls of every player."""
    betas = np.asarray(betas, dtype=float)
    num_players = betas.shape[0]
    duration = horizon_steps * dt
    controls = np.zeros((horizon_steps, num_players * CONTROL_DIM_PER_PLAYER))
    for t in range(horizon_steps):
        for i in range(num_players):
            controls[t, control_slice(i)] = seed_control_at(betas[i, 0], betas[i, 1], t * dt, duration)
    return open_loop_profile(controls, STATE_DIM_PER_PLAYER * num_players, dt)


def sample_seeds(
    distribution: SeedDistribution,
    num_samples: int,
    rng,
    num_players: int,
    horizon_steps: int,
    dt: float,
) -> List[StrategyProfile]:
    """
    K open-loop seed profiles, deterministic in `rng` (a seed or a Generator).
    """
    betas = sample_seed_parameters(distribution, num_samples, num_players, rng)
    return [seed_profile(b, horizon_steps, dt) for b in betas]


# =============================================================================
# Transition and Observation Model
# =============================================================================

def predict_step(
    particle: Particle,
    x_prev: np.ndarray,
    u_robot: Optional[np.ndarray],
    dynamics: DynamicsModel,
    robot_index: int = 0,
) -> np.ndarray:
    """
    State reached from x_prev if the humans follow the particle's strategies.

    The robot applies `u_robot`; with u_robot=None every player, robot
    included, follows the particle. Human controls are feedback on the true
    x_prev, not on the particle's reference.

    Raises:
        DivergenceError: if the predicted state is not finite
    """
    profile = particle.profile
    x_prev = np.asarray(x_prev, dtype=float)
    u = profile.joint_control(0, x_prev)
    if u_robot is not None:
        u[control_slice(robot_index)] = u_robot
    x_hat = dynamics._rk4(x_prev, u, profile.reference.dt, 0)
    if not np.all(np.isfinite(x_hat)):
        raise DivergenceError("predicted state is not finite")
    return x_hat


def likelihood(x: np.ndarray, x_hat: np.ndarray, observation_noise: float) -> float:
    """Log-density of observing x under N(x_hat, observation_noise * I)."""
    if not observation_noise > 0:
        raise ValueError(f"observation_noise must be positive, got {observation_noise}")
    return float(multivariate_normal.logpdf(x, mean=x_hat, cov=observation_noise))


def update_particle(
    particle: Particle,
    game: GameDefinition,
    x_prev: np.ndarray,
    x_t: np.ndarray,
    u_robot: Optional[np.ndarray],
    time_prev: int,
    observation_noise: float,
    settings: Optional[SolverSettings] = None,
    robot_index: int = 0,
    weighting: bool = True,
) -> Particle:
    """
    Re-solve one particle from x_prev, predict x_t and reweight.

    A failed re-solve eliminates the particle. With weighting=False the
    weight is left alone and a failed re-solve keeps the shifted warm start.
    """
    if not particle.alive:
        return particle
    warm = shift_profile(particle.profile, time_prev - particle.solved_at, game.dynamics)
    try:
        result = ilq_solve(game, x_prev, warm, settings)
    except (DivergenceError, LQSolverError) as err:
        logger.debug("particle %d: re-solve failed: %s", particle.id, err)
        if weighting:
            return replace(particle, log_weight=-np.inf)
        return replace(particle, profile=warm, solved_at=time_prev)

    updated = replace(particle, profile=result.profile, last_result=result, solved_at=time_prev)
    if not weighting:
        return updated
    try:
        x_hat = predict_step(updated, x_prev, u_robot, game.dynamics, robot_index)
    except DivergenceError:
        return replace(updated, log_weight=-np.inf)
    return replace(updated, log_weight=particle.log_weight + likelihood(x_t, x_hat, observation_noise))


# =============================================================================
# Belief Maintenance
# =============================================================================

def trajectory_distance(a: SolveResult, b: SolveResult) -> float:
    """Max over time of the distance between stacked joint positions."""
    idx = position_indices(a.trajectory.num_players)
    diff = a.trajectory.states[:, idx] - b.trajectory.states[:, idx]
    return float(np.linalg.norm(diff, axis=1).max())


def _weight_order(particles: Sequence[Particle]) -> List[Particle]:
    return sorted(particles, key=lambda p: (-p.log_weight, p.id))


def combine_duplicates(belief: Belief, merge_tol: float) -> Belief:
    """
    Merge particles whose predicted trajectories lie within `merge_tol`.

    Greedy in order of decreasing weight: each particle joins the first
    representative it is close to, and its weight is added onto that
    representative. Particles keep their relative order.
    """
    representatives: List[Particle] = []
    merged_weight: Dict[int, float] = {}
    for particle in _weight_order(belief.particles):
        target = None
        if particle.last_result is not None and particle.alive:
            for rep in representatives:
                if rep.last_result is None or not rep.alive:
                    continue
                if trajectory_distance(rep.last_result, particle.last_result) <= merge_tol:
                    target = rep
                    break
        if target is None:
            representatives.append(particle)
            merged_weight[particle.id] = particle.log_weight
        else:
            merged_weight[target.id] = float(np.logaddexp(merged_weight[target.id], particle.log_weight))

    if len(representatives) < len(belief):
        logger.debug("merged %d particles into %d", len(belief), len(representatives))
    kept = {p.id for p in representatives}
    return Belief([
        replace(p, log_weight=merged_weight[p.id]) for p in belief.particles if p.id in kept
    ])


def prune_negligible(belief: Belief, log_ratio: float = PRUNE_LOG_RATIO) -> Belief:
    """
    Drop particles whose log-weight is more than `log_ratio` below the best.

    Raises:
        EstimatorCollapseError: if no particle has positive weight
    """
    log_w = belief.log_weights()
    if log_w.size == 0 or not np.any(log_w > -np.inf):
        raise EstimatorCollapseError("every particle has been eliminated")
    cutoff = log_w.max() - log_ratio
    survivors = [p for p in belief.particles if p.log_weight >= cutoff]
    if len(survivors) == 1 and len(belief) > 1:
        logger.warning("belief pruned to a single particle (id %d)", survivors[0].id)
    return Belief(survivors)


def map_particle(belief: Belief) -> Particle:
    """
    Highest-weight particle; ties go to the lowest id.

    Raises:
        EstimatorCollapseError: if every weight is zero
    """
    live = [p for p in belief.particles if p.alive]
    if not live:
        raise EstimatorCollapseError("every particle has been eliminated")
    return _weight_order(live)[0]


def map_strategy(belief: Belief, robot_index: int = 0) -> Tuple[int, AffineStrategy]:
    """(particle id, robot strategy) of the maximum a-posteriori particle."""
    best = map_particle(belief)
    return best.id, best.strategy(robot_index)


def map_planner_step(
    belief: Belief,
    x_t: np.ndarray,
    x_prev: np.ndarray,
    u_applied: Optional[np.ndarray],
    game: GameDefinition,
    settings: Optional[SolverSettings],
    time_index: int,
    observation_noise: float,
    merge_tol: float,
    robot_index: int = 0,
    executor=None,
) -> Tuple[np.ndarray, Belief]:
    """
    One step of maximum a-posteriori aligned control.

    Re-solves and reweights every particle with the transition from
    x_prev (time t - 1) to x_t, merges duplicates, prunes underflowed
    particles and returns the MAP robot control at time t with the posterior.

    Args:
        u_applied: robot control applied at t - 1 (None when observing only)
        executor: optional concurrent.futures executor for per-particle work;
            results are collected in particle order
    """
    def work(particle: Particle) -> Particle:
        return update_particle(
            particle, game, x_prev, x_t, u_applied, time_index - 1,
            observation_noise, settings, robot_index,
        )

    if executor is None:
        updated = [work(p) for p in belief.particles]
    else:
        updated = list(executor.map(work, belief.particles))

    posterior = prune_negligible(combine_duplicates(Belief(updated), merge_tol))
    best = map_particle(posterior)
    u = best.profile.control(robot_index, time_index - best.solved_at, x_t)
    return u, posterior
