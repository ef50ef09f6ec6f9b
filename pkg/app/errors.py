"""
Exception hierarchy shared by the services and the CLI.
"""

from typing import Optional


class TrackLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(TrackLabError, ValueError):
    """An argument lies outside the operation's domain."""


class ConfigurationError(DomainError):
    """Invalid experiment or tracker configuration."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class UnsupportedOperationError(TrackLabError):
    """The operation is not defined for the given scheme or parameters."""


class EmptyObjectiveError(TrackLabError):
    """The objective has not absorbed any sample yet."""


class ContractViolationError(TrackLabError):
    """Tracker state and objective refer to different time steps."""


class HorizonMismatchError(DomainError):
    """Traces and envelope cover different horizons."""


class ExperimentTimeoutError(TrackLabError):
    """The experiment runner exceeded its wall-clock budget."""
