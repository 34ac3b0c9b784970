"""Exception taxonomy shared across the package.

Each class marks one failure family so callers (and the CLI's exit-code
mapping) can react by category instead of parsing message text.
"""


class DnspnError(Exception):
    """Base class for all package errors."""


class ShapeError(DnspnError):
    """Operands have incompatible or unexpected dimensions."""


class ParameterError(DnspnError):
    """An argument value is outside the operation's domain."""


class UsageError(DnspnError):
    """An object of the wrong kind or mode was passed to an operation."""


class DataError(DnspnError):
    """Dataset contents or dataset files are invalid."""


class NumericError(DnspnError):
    """A computation produced non-finite values."""


class MetricError(DnspnError):
    """A metric is undefined for the given inputs."""
