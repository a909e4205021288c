"""
Maximum a-posteriori aligned planner, its random-equilibrium baseline, and
the simulated humans both are evaluated against.

The planner keeps a particle belief over equilibria. Every step it re-solves
each particle from the previous state, reweights it by the observed
transition, and plays the robot's strategy from the most likely particle.
The baseline commits to one randomly drawn equilibrium for the whole run and
only re-solves it in receding-horizon fashion.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from simulator.errors import DivergenceError, EstimatorCollapseError, LQSolverError
from simulator.game import GameDefinition
from simulator.state_space import check_joint_state, control_slice
from simulator.trajectory import Trajectory

from .ilq_solver import SolverSettings, ilq_solve, rollout
from .inference import (
    Belief,
    Particle,
    SeedDistribution,
    combine_duplicates,
    map_particle,
    map_planner_step,
    prune_negligible,
    sample_seed_parameters,
    seed_profile,
    update_particle,
)
from .strategy import StrategyProfile, shift_profile

logger = logging.getLogger(__name__)

# Seeds drawn before a single-equilibrium agent gives up
MAX_SEED_DRAWS = 10


class MAPAlignedPlanner:
    """
    Robot planner that aligns with the most likely equilibrium.

    In observer mode the robot applies no control of its own: every player's
    transition is predicted from the particle, which is what the prediction
    experiment needs.

    Usage:
        planner = MAPAlignedPlanner(game, SeedDistribution(), num_particles=50)
        u = planner.initialize(x0, rng)
        for t in range(1, steps):
            ...
            u = planner.step(x_t, x_prev, u)
    """

    def __init__(
        self,
        game: GameDefinition,
        seed_distribution: SeedDistribution,
        num_particles: int,
        observation_noise: float = 0.1,
        merge_tol: float = 0.25,
        settings: Optional[SolverSettings] = None,
        robot_index: int = 0,
        threads: int = 1,
        observer: bool = False,
    ):
        if num_particles < 1:
            raise ValueError(f"num_particles must be positive, got {num_particles}")
        if not 0 <= robot_index < game.num_players:
            raise ValueError(f"robot_index {robot_index} out of range for {game.num_players} players")
        self.game = game
        self.seed_distribution = seed_distribution
        self.num_particles = num_particles
        self.observation_noise = observation_noise
        self.merge_tol = merge_tol
        self.settings = settings or SolverSettings()
        self.robot_index = robot_index
        self.observer = observer
        self.threads = max(1, int(threads))
        self._executor = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None

        self.belief = Belief()
        self.time = 0
        self.seed_parameters: Optional[np.ndarray] = None

    # -------------------------------------------------------------------------
    # Lifecycle
    # -------------------------------------------------------------------------

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self) -> "MAPAlignedPlanner":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _map(self, fn: Callable, items: Sequence) -> List:
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    # -------------------------------------------------------------------------
    # Planning
    # -------------------------------------------------------------------------

    def initialize(self, x0: np.ndarray, rng) -> np.ndarray:
        """
        Sample seeds, solve every particle from x0, and return the robot control at t = 0.

        Raises:
            EstimatorCollapseError: if no seed could be solved
        """
        x0 = check_joint_state(x0, self.game.num_players, "x0")
        rng = np.random.default_rng(rng)
        self.seed_parameters = sample_seed_parameters(
            self.seed_distribution, self.num_particles, self.game.num_players, rng
        )
        particles = [
            Particle(k, seed_profile(betas, self.game.horizon_steps, self.game.dt))
            for k, betas in enumerate(self.seed_parameters)
        ]
        particles = self._map(lambda p: self._initial_solve(p, x0), particles)
        self.belief = prune_negligible(combine_duplicates(Belief(particles), self.merge_tol))
        self.time = 0
        logger.debug(
            "initialized %d particles, %d distinct after merging", self.num_particles, len(self.belief)
        )
        return self.control(x0)

    def _initial_solve(self, particle: Particle, x0: np.ndarray) -> Particle:
        try:
            result = ilq_solve(self.game, x0, particle.profile, self.settings)
        except (DivergenceError, LQSolverError) as err:
            logger.debug("particle %d: initial solve failed: %s", particle.id, err)
            return replace(particle, log_weight=-np.inf)
        return replace(particle, profile=result.profile, last_result=result, solved_at=0)

    def step(self, x_t: np.ndarray, x_prev: np.ndarray, u_applied: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Advance one step: update the belief with the transition x_prev -> x_t.

        Args:
            x_t: observed state at the new time
            x_prev: observed state one step earlier
            u_applied: robot control applied at x_prev (ignored in observer mode)

        Returns:
            Robot control at x_t from the MAP particle
        """
        self.time += 1
        u_robot = None if self.observer else u_applied
        u, self.belief = map_planner_step(
            self.belief, x_t, x_prev, u_robot, self.game, self.settings, self.time,
            self.observation_noise, self.merge_tol, self.robot_index, self._executor,
        )
        return u

    def map_particle(self) -> Particle:
        return map_particle(self.belief)

    def control(self, x_t: np.ndarray) -> np.ndarray:
        """Robot control at the current time from the MAP particle."""
        best = self.map_particle()
        return best.profile.control(self.robot_index, self.time - best.solved_at, x_t)

    def predict(self, x_t: np.ndarray, steps: Optional[int] = None) -> Trajectory:
        """
        Joint trajectory predicted from x_t by the MAP particle's strategies.

        Args:
            steps: number of steps to keep, at most the planning horizon
        """
        best = self.map_particle()
        profile = shift_profile(best.profile, self.time - best.solved_at, self.game.dynamics)
        prediction = rollout(self.game.dynamics, x_t, profile)
        if steps is None or steps >= prediction.horizon:
            return prediction
        return Trajectory(prediction.states[: steps + 1], prediction.controls[:steps], prediction.dt)


class RandomEquilibriumBaseline(MAPAlignedPlanner):
    """
    Plays one randomly drawn equilibrium for the whole run.

    The equilibrium is still re-solved every step (warm-started), so the
    baseline keeps state feedback; it only never changes its mind.
    """

    def __init__(
        self,
        game: GameDefinition,
        seed_distribution: SeedDistribution,
        settings: Optional[SolverSettings] = None,
        robot_index: int = 0,
        observer: bool = False,
        **_ignored,
    ):
        super().__init__(
            game, seed_distribution, num_particles=1, settings=settings,
            robot_index=robot_index, threads=1, observer=observer,
        )

    def initialize(self, x0: np.ndarray, rng) -> np.ndarray:
        x0 = check_joint_state(x0, self.game.num_players, "x0")
        rng = np.random.default_rng(rng)
        for draw in range(MAX_SEED_DRAWS):
            self.seed_parameters = sample_seed_parameters(
                self.seed_distribution, 1, self.game.num_players, rng
            )
            particle = self._initial_solve(
                Particle(0, seed_profile(self.seed_parameters[0], self.game.horizon_steps, self.game.dt)),
                x0,
            )
            if particle.alive:
                self.belief = Belief([particle])
                self.time = 0
                return self.control(x0)
            logger.debug("baseline seed draw %d failed, drawing again", draw)
        raise EstimatorCollapseError(f"no solvable seed in {MAX_SEED_DRAWS} draws")

    def step(self, x_t: np.ndarray, x_prev: np.ndarray, u_applied: Optional[np.ndarray] = None) -> np.ndarray:
        self.time += 1
        particle = update_particle(
            self.belief.particles[0], self.game, x_prev, x_t, None, self.time - 1,
            self.observation_noise, self.settings, self.robot_index, weighting=False,
        )
        self.belief = Belief([particle])
        return self.control(x_t)


class HumanTeam:
    """
    Simulated humans following one secretly chosen equilibrium.

    Every step the humans re-solve the game from the current state,
    warm-started with their previous solution, and apply their part of it.
    Optional zero-mean Gaussian execution noise is added to their controls.
    """

    def __init__(
        self,
        game: GameDefinition,
        human_indices: Sequence[int],
        settings: Optional[SolverSettings] = None,
        noise_std: float = 0.0,
        rng=None,
    ):
        if noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {noise_std}")
        self.game = game
        self.human_indices = list(human_indices)
        self.settings = settings or SolverSettings()
        self.noise_std = noise_std
        self.rng = np.random.default_rng(rng)
        self.profile: Optional[StrategyProfile] = None
        self.solved_at = 0
        self.secret_parameters: Optional[np.ndarray] = None

    def initialize(self, x0: np.ndarray, seed_distribution: SeedDistribution, rng) -> StrategyProfile:
        """Draw the secret equilibrium: sample seeds until one solves from x0."""
        rng = np.random.default_rng(rng)
        for _ in range(MAX_SEED_DRAWS):
            betas = sample_seed_parameters(seed_distribution, 1, self.game.num_players, rng)[0]
            try:
                result = ilq_solve(
                    self.game, x0, seed_profile(betas, self.game.horizon_steps, self.game.dt), self.settings
                )
            except (DivergenceError, LQSolverError) as err:
                logger.debug("human seed failed: %s", err)
                continue
            self.secret_parameters = betas
            self.adopt(result.profile, 0)
            return self.profile
        raise EstimatorCollapseError(f"humans found no solvable seed in {MAX_SEED_DRAWS} draws")

    def adopt(self, profile: StrategyProfile, solved_at: int = 0) -> None:
        """Follow a given equilibrium profile, solved from the state at `solved_at`."""
        self.profile = profile
        self.solved_at = solved_at

    def act(self, t: int, x_t: np.ndarray) -> np.ndarray:
        """
        Joint control with the human blocks filled and every other block zero.
        """
        if self.profile is None:
            raise RuntimeError("HumanTeam.act called before initialize/adopt")
        if t > self.solved_at:
            warm = shift_profile(self.profile, t - self.solved_at, self.game.dynamics)
            try:
                self.profile = ilq_solve(self.game, x_t, warm, self.settings).profile
            except (DivergenceError, LQSolverError) as err:
                logger.debug("humans kept their warm start at step %d: %s", t, err)
                self.profile = warm
            self.solved_at = t

        full = self.profile.joint_control(t - self.solved_at, x_t)
        u = np.zeros_like(full)
        for i in self.human_indices:
            block = control_slice(i)
            u[block] = full[block]
            if self.noise_std > 0:
                u[block] += self.rng.normal(0.0, self.noise_std, size=u[block].shape)
        return u
