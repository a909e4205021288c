"""
Scenario configuration.

Scenarios are human-editable `key = value` files read with python-dotenv.
Lists are comma separated; per-player state lists separate players with `;`.

    # two_player.cfg
    num_players = 2
    dt = 0.1
    beta_omega = -1.5, 1.5

Process defaults (worker count, archive root, log level) come from the
environment, optionally through a `.env` file.
"""

import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from dotenv import dotenv_values, load_dotenv

from planner.ilq_solver import SolverSettings
from planner.inference import SeedDistribution
from simulator.errors import ConfigError
from simulator.game import GameDefinition
from simulator.state_space import STATE_DIM_PER_PLAYER

load_dotenv()

ARCHIVE_TRAJECTORY_MODES = ("map", "all")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything needed to rebuild one experiment scenario.

    Horizons are in seconds and must be integer multiples of dt.
    Players start on a circle of `radius`, facing its center, with goals
    at the antipodal points, unless explicit states are given.
    """

    name: str = "scenario"
    num_players: int = 2
    robot_index: int = 0
    dt: float = 0.1
    sim_horizon: float = 10.0
    prediction_horizon: float = 10.0

    # Geometry
    radius: float = 3.0
    start_angles_deg: Optional[Tuple[float, ...]] = None
    initial_speed: float = 0.0
    initial_states: Optional[Tuple[Tuple[float, ...], ...]] = None
    goal_states: Optional[Tuple[Tuple[float, ...], ...]] = None

    # Cost weights, shared by all players
    weight_terminal: float = 10.0
    weight_control: Tuple[float, float] = (1.0, 1.0)
    weight_velocity: float = 0.1
    reference_speed: float = 0.0
    weight_proximity: float = 50.0
    proximity_threshold: float = 0.75

    # Inference
    num_particles: int = 50
    observation_noise: float = 0.1
    beta_omega: Tuple[float, float] = (-1.5, 1.5)
    beta_a: Tuple[float, float] = (-1.0, 1.0)
    merge_tol: float = 0.25
    human_noise_std: float = 0.0

    # Solver
    solver_max_iterations: int = 100
    solver_convergence_tol: float = 1e-2
    solver_step_size: float = 0.5
    solver_backtracking_shrink: float = 0.5
    solver_max_backtracks: int = 8
    solver_regularization: float = 1e-4

    # Analysis and archives
    num_clusters: Optional[int] = None
    k_max: int = 10
    archive_trajectories: str = "map"

    seed: int = 0

    def __post_init__(self):
        if self.num_players < 2:
            raise ConfigError(f"num_players must be at least 2, got {self.num_players}")
        if not 0 <= self.robot_index < self.num_players:
            raise ConfigError(f"robot_index {self.robot_index} out of range")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        for name in ("sim_horizon", "prediction_horizon"):
            steps = getattr(self, name) / self.dt
            if getattr(self, name) <= 0 or abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                raise ConfigError(f"{name} must be a positive multiple of dt")
        if self.prediction_steps < 2:
            raise ConfigError("prediction_horizon must cover at least two steps")
        if min(self.weight_terminal, self.weight_velocity, self.weight_proximity) < 0:
            raise ConfigError("cost weights must be nonnegative")
        if len(self.weight_control) != 2 or min(self.weight_control) <= 0:
            raise ConfigError("weight_control must be two positive numbers")
        if self.proximity_threshold <= 0 or self.observation_noise <= 0:
            raise ConfigError("proximity_threshold and observation_noise must be positive")
        if self.num_particles < 1 or self.merge_tol < 0 or self.human_noise_std < 0:
            raise ConfigError("num_particles must be positive, merge_tol and human_noise_std nonnegative")
        for name in ("beta_omega", "beta_a"):
            low, high = getattr(self, name)
            if not (math.isfinite(low) and math.isfinite(high)) or low > high:
                raise ConfigError(f"{name} must be a finite interval with low <= high")
        if self.start_angles_deg is not None and len(self.start_angles_deg) != self.num_players:
            raise ConfigError("start_angles_deg needs one angle per player")
        for name in ("initial_states", "goal_states"):
            states = getattr(self, name)
            if states is not None and (
                len(states) != self.num_players
                or any(len(s) != STATE_DIM_PER_PLAYER for s in states)
            ):
                raise ConfigError(f"{name} needs {STATE_DIM_PER_PLAYER} numbers per player")
        if self.archive_trajectories not in ARCHIVE_TRAJECTORY_MODES:
            raise ConfigError(f"archive_trajectories must be one of {ARCHIVE_TRAJECTORY_MODES}")
        if self.num_clusters is not None and self.num_clusters < 1:
            raise ConfigError("num_clusters must be positive")
        if self.k_max < 1:
            raise ConfigError("k_max must be positive")
        try:
            self.solver_settings()
        except ValueError as err:
            raise ConfigError(str(err)) from err

    # =========================================================================
    # Derived quantities
    # =========================================================================

    @property
    def sim_steps(self) -> int:
        return int(round(self.sim_horizon / self.dt))

    @property
    def prediction_steps(self) -> int:
        return int(round(self.prediction_horizon / self.dt))

    @property
    def human_indices(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.num_players) if i != self.robot_index)

    def _angles(self) -> np.ndarray:
        if self.start_angles_deg is not None:
            return np.deg2rad(np.asarray(self.start_angles_deg, dtype=float))
        if self.num_players == 2:
            return np.deg2rad([0.0, 90.0])
        return 2.0 * np.pi * np.arange(self.num_players) / self.num_players

    def initial_state(self) -> np.ndarray:
        """Joint initial state (4N)."""
        if self.initial_states is not None:
            return np.asarray(self.initial_states, dtype=float).reshape(-1)
        blocks = []
        for phi in self._angles():
            heading = np.arctan2(-np.sin(phi), -np.cos(phi))
            blocks.append([self.radius * np.cos(phi), self.radius * np.sin(phi), heading, self.initial_speed])
        return np.asarray(blocks, dtype=float).reshape(-1)

    def goals(self) -> np.ndarray:
        """(N, 4) goal states: antipodal point, same heading, at rest."""
        if self.goal_states is not None:
            return np.asarray(self.goal_states, dtype=float)
        blocks = []
        for phi in self._angles():
            heading = np.arctan2(-np.sin(phi), -np.cos(phi))
            blocks.append([-self.radius * np.cos(phi), -self.radius * np.sin(phi), heading, 0.0])
        return np.asarray(blocks, dtype=float)

    def build_game(self, horizon_steps: Optional[int] = None) -> GameDefinition:
        """Navigation game over `horizon_steps` (default: the prediction horizon)."""
        return GameDefinition.navigation(
            self.goals(),
            horizon_steps or self.prediction_steps,
            self.dt,
            weight_terminal=self.weight_terminal,
            weight_control=self.weight_control,
            weight_velocity=self.weight_velocity,
            reference_speed=self.reference_speed,
            weight_proximity=self.weight_proximity,
            proximity_threshold=self.proximity_threshold,
        )

    def seed_distribution(self) -> SeedDistribution:
        return SeedDistribution(beta_omega=tuple(self.beta_omega), beta_a=tuple(self.beta_a))

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            max_iterations=self.solver_max_iterations,
            convergence_tol=self.solver_convergence_tol,
            step_size=self.solver_step_size,
            backtracking_shrink=self.solver_backtracking_shrink,
            max_backtracks=self.solver_max_backtracks,
            regularization=self.solver_regularization,
        )

    def with_overrides(self, **changes) -> "ScenarioConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)

    # =========================================================================
    # Serialization
    # =========================================================================

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values = {}
        for key, value in data.items():
            if isinstance(value, list):
                value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
            values[key] = value
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        """
        Parse a scenario file.

        Raises:
            ConfigError: on a missing file, unknown keys or invalid values
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"scenario file not found: {path}")
        raw = dotenv_values(path)
        return cls.from_strings(raw)

    @classmethod
    def from_strings(cls, raw: Dict[str, Optional[str]]) -> "ScenarioConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(raw) - set(types)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values = {}
        for key, text in raw.items():
            if text is None or text.strip() == "":
                raise ConfigError(f"missing value for {key}")
            try:
                values[key] = _parse_value(key, text.strip())
            except ValueError as err:
                raise ConfigError(f"invalid value for {key}: {text!r}") from err
        return cls(**values)


_INT_KEYS = {
    "num_players", "robot_index", "num_particles", "solver_max_iterations",
    "solver_max_backtracks", "num_clusters", "k_max", "seed",
}
_STR_KEYS = {"name", "archive_trajectories"}
_PAIR_KEYS = {"weight_control", "beta_omega", "beta_a"}
_STATE_LIST_KEYS = {"initial_states", "goal_states"}


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_value(key: str, text: str):
    if key in _STR_KEYS:
        return text
    if key in _INT_KEYS:
        return int(text)
    if key in _PAIR_KEYS:
        pair = _floats(text)
        if len(pair) != 2:
            raise ValueError("expected two numbers")
        return pair
    if key == "start_angles_deg":
        return _floats(text)
    if key in _STATE_LIST_KEYS:
        return tuple(_floats(block) for block in text.split(";") if block.strip())
    return float(text)


# =============================================================================
# Process defaults
# =============================================================================

def runtime_defaults() -> Dict[str, Any]:
    """Worker count, archive root and log level from the environment."""
    return {
        "threads": int(os.getenv("ALIGN_THREADS", "1")),
        "out_dir": os.getenv("ALIGN_OUT_DIR", "out"),
        "log_level": os.getenv("ALIGN_LOG_LEVEL", "WARNING"),
    }
