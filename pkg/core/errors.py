"""
Exception hierarchy for the simulator.

Every error raised on purpose by the package derives from SimulationError so
the CLI can map it onto an exit code.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for all simulator errors."""

    exit_code = 3


class InvalidInputError(SimulationError, ValueError):
    """A pure function received a value outside its domain."""


class DegenerateMotionError(SimulationError, ArithmeticError):
    """A heading vector has zero length, so the angle is undefined."""


class DegenerateContentionError(SimulationError, ArithmeticError):
    """The back-off formula is undefined for fewer than two contenders."""


class SelfRouteError(SimulationError, ValueError):
    """A route was requested from a node to itself."""


class NoRouteError(SimulationError, LookupError):
    """A route table holds no selectable entry."""


class ConfigError(SimulationError, ValueError):
    """Invalid configuration value; `field` names the offending key."""

    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ScenarioParseError(ConfigError):
    """Malformed scenario file; `line` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantViolation(SimulationError, AssertionError):
    """A run broke conservation, causality, loop freedom or a delay bound."""

    exit_code = 4

    def __init__(self, message: str, cell: Optional[tuple] = None):
        self.cell = cell
        if cell is not None:
            message = f"{message} (cell protocol={cell[0]} nodes={cell[1]} seed={cell[2]})"
        super().__init__(message)


class OutputError(SimulationError, OSError):
    """Output directory or file cannot be written."""

    exit_code = 5
