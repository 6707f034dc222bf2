"""Exception types shared across the simulator."""


class ConfigError(Exception):
    """Malformed or incomplete configuration document."""


class ValidationError(ValueError):
    """A value is outside its permitted range."""


class DegenerateGeometryError(ValueError):
    """Geometric construction is undefined (e.g. coincident points)."""


class DegenerateEllipseError(DegenerateGeometryError):
    """Bistatic path length does not exceed the focal separation."""


class InsufficientClustersError(ValueError):
    """Target selection asked for more clusters than are available."""


class ParseError(ValueError):
    """Malformed trace file; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IncompleteHistoryError(ValueError):
    """Velocity history does not cover the requested time span."""


class ConventionError(ValueError):
    """Absolute and excess delay conventions were mixed."""


class DivisionGuardError(ZeroDivisionError):
    """An element-wise division would divide by (near-)zero."""
