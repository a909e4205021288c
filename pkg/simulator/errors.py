"""
Exception hierarchy shared by every package in the project.

Library code raises these; only the CLI turns them into exit codes.
"""

from typing import Optional


class StrategyAlignmentError(Exception):
    """Base class for all errors raised by this project."""


class DimensionError(StrategyAlignmentError, ValueError):
    """A vector or matrix does not match the player count."""


class NonFiniteError(StrategyAlignmentError, ValueError):
    """A state or control contains NaN or infinite entries."""


class DivergenceError(StrategyAlignmentError):
    """A rollout left the finite region."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class LQSolverError(StrategyAlignmentError):
    """The stacked Nash system of one stage could not be solved."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class EstimatorCollapseError(StrategyAlignmentError):
    """Every particle of the belief has been eliminated."""


class ConfigError(StrategyAlignmentError, ValueError):
    """Invalid scenario file or scenario values."""


class ArchiveError(StrategyAlignmentError):
    """A run archive is missing, unreadable or inconsistent."""
