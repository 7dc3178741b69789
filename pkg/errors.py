"""Exception types shared by every module of the toolkit."""

from __future__ import annotations

from typing import Optional


class SairsError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SairsError, ValueError):
    """An input lies outside the domain of an operation (negative, non-finite, ...)."""


class PreconditionError(SairsError, ValueError):
    """An operation was called where its result is undefined (e.g. R0s <= 1)."""


class ConfigError(SairsError, ValueError):
    """A run configuration is malformed; ``key_path`` names the offending key."""

    def __init__(self, key_path: str, message: str) -> None:
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class SimulationError(SairsError, RuntimeError):
    """A time step produced a non-finite state."""

    def __init__(
        self,
        message: str,
        step_index: int,
        trajectory_index: Optional[int] = None,
    ) -> None:
        self.step_index = step_index
        self.trajectory_index = trajectory_index
        where = f"step {step_index}"
        if trajectory_index is not None:
            where = f"trajectory {trajectory_index}, {where}"
        super().__init__(f"{message} ({where})")
