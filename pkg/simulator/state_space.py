"""
State Space Module for the multi-player navigation game.

Defines the per-player block layout of joint states and joint controls
and provides validation for vectors passed across module boundaries.

Joint state:   [p_x, p_y, theta, v] per player, stacked (4N)
Joint control: [omega, a] per player, stacked (2N)
"""

from typing import List

import numpy as np

from .errors import DimensionError, NonFiniteError


STATE_DIM_PER_PLAYER = 4
CONTROL_DIM_PER_PLAYER = 2

# Offsets inside one player's state block
PX, PY, THETA, V = 0, 1, 2, 3

# Offsets inside one player's control block
OMEGA, ACCEL = 0, 1

STATE_LABELS = ["p_x", "p_y", "theta", "v"]
CONTROL_LABELS = ["omega", "a"]


def state_slice(player: int) -> slice:
    """Slice of player `player`'s block inside the joint state."""
    start = STATE_DIM_PER_PLAYER * player
    return slice(start, start + STATE_DIM_PER_PLAYER)


def control_slice(player: int) -> slice:
    """Slice of player `player`'s block inside the joint control."""
    start = CONTROL_DIM_PER_PLAYER * player
    return slice(start, start + CONTROL_DIM_PER_PLAYER)


def position_indices(num_players: int) -> List[int]:
    """
    Indices of (p_x, p_y) of every player inside the joint state.

    Examples:
        >>> position_indices(2)
        [0, 1, 4, 5]
    """
    indices = []
    for player in range(num_players):
        base = STATE_DIM_PER_PLAYER * player
        indices.extend([base + PX, base + PY])
    return indices


def positions(x: np.ndarray, num_players: int) -> np.ndarray:
    """Return an (N, 2) array of player positions from a joint state."""
    return np.asarray(x)[..., position_indices(num_players)].reshape(
        *np.shape(x)[:-1], num_players, 2
    )


def split_controls(u: np.ndarray, num_players: int) -> List[np.ndarray]:
    """Split a joint control into per-player blocks."""
    return [np.asarray(u)[control_slice(i)] for i in range(num_players)]


def stack_controls(blocks: List[np.ndarray]) -> np.ndarray:
    """Inverse of split_controls."""
    return np.concatenate([np.asarray(b, dtype=float) for b in blocks])


def check_joint_state(x: np.ndarray, num_players: int, name: str = "state") -> np.ndarray:
    """
    Validate a joint state and return it as a float array.

    Raises:
        DimensionError: if the length is not 4 * num_players
    """
    x = np.asarray(x, dtype=float)
    expected = STATE_DIM_PER_PLAYER * num_players
    if x.shape != (expected,):
        raise DimensionError(
            f"{name} has shape {x.shape}, expected ({expected},) for {num_players} players"
        )
    return x


def check_joint_control(u: np.ndarray, num_players: int, name: str = "control") -> np.ndarray:
    """
    Validate a joint control and return it as a float array.

    Raises:
        DimensionError: if the length is not 2 * num_players
    """
    u = np.asarray(u, dtype=float)
    expected = CONTROL_DIM_PER_PLAYER * num_players
    if u.shape != (expected,):
        raise DimensionError(
            f"{name} has shape {u.shape}, expected ({expected},) for {num_players} players"
        )
    return u


def check_finite(vector: np.ndarray, name: str) -> None:
    """Raise NonFiniteError if `vector` contains NaN or inf."""
    if not np.all(np.isfinite(vector)):
        raise NonFiniteError(f"{name} contains non-finite entries: {vector}")


def describe_state(x: np.ndarray, num_players: int) -> str:
    """
    Human-readable description of a joint state, one line per player.
    """
    x = check_joint_state(x, num_players)
    lines = []
    for player in range(num_players):
        block = x[state_slice(player)]
        fields = ", ".join(f"{label}={value:.3f}" for label, value in zip(STATE_LABELS, block))
        lines.append(f"player {player + 1}: {fields}")
    return "\n".join(lines)
