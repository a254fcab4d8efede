"""Exception hierarchy and the CLI exit-code table."""


class EmoCueError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(EmoCueError):
    exit_code = 2


class UsageError(EmoCueError):
    exit_code = 2


class DataError(EmoCueError, ValueError):
    exit_code = 3


class StructuralError(DataError):
    """Wrong shape or arity of an input."""


class DomainError(DataError):
    """Value outside the admissible domain (labels, probabilities, ranges)."""


class GeometryError(DataError):
    """Degenerate geometry: zero-width faces, collinear eye rings."""


class NumericError(EmoCueError, ArithmeticError):
    exit_code = 4


class ChecksumError(EmoCueError):
    exit_code = 5
