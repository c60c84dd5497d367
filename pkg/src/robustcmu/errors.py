"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` (CLI exit code 2),
problems detected while simulating derive from :class:`SimulationError`
(exit code 3).
"""

from __future__ import annotations


class RobustCmuError(Exception):
    pass


class ConfigError(RobustCmuError, ValueError):
    """Invalid parameters. ``line`` is set when the value came from a config file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CriticalLoadViolation(ConfigError):
    pass


class NonPositiveRate(ConfigError):
    pass


class ExponentOrderViolation(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


class ParseError(ConfigError):
    pass


class RateUnderflow(ConfigError):
    pass


class SimulationError(RobustCmuError, RuntimeError):
    pass


class HorizonOverflow(SimulationError):
    pass


class NonPositiveIntensity(SimulationError, ValueError):
    pass
