"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """A configuration value or argument violates a documented constraint."""


class NumericalError(RuntimeError):
    """A numerical operation failed; carries diagnostics in ``info``."""

    def __init__(self, message: str, **info):
        super().__init__(message)
        self.info = dict(info)


class SimulationDiverged(NumericalError):
    """Closed-loop state left the admissible region during integration."""
