"""Exception types shared across the package.

Kept in one module so the compiled kernels, the pure-Python kernels and the
high-level modules can raise identical types without import cycles.
"""


class StabilsimError(Exception):
    """Base class for all package-specific errors."""


class NetlistSyntaxError(StabilsimError):
    """Raised when netlist text cannot be parsed.

    Carries the 1-based line and column of the offending token.
    """

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, col {column}: {message}" if line else message)
        self.message = message
        self.line = line
        self.column = column


class UnknownDeviceKindError(NetlistSyntaxError):
    """Element line starts with a letter that names no known device kind."""


class DuplicateNameError(NetlistSyntaxError):
    """Two components share a name (compared case-insensitively)."""


class SingularMatrixError(StabilsimError):
    """LU factorization hit a pivot below the singularity threshold."""


class SingularTopologyError(StabilsimError):
    """The assembled system is singular (e.g. conflicting ideal sources)."""


class NoConvergenceError(StabilsimError):
    """Newton failed to converge after every fallback strategy."""

    def __init__(self, message: str, strategies=None, time: float | None = None):
        super().__init__(message)
        self.strategies = tuple(strategies or ())
        self.time = time


class UnknownNodeError(StabilsimError, KeyError):
    """A node name is absent from the waveform or operating point."""


class WindowTooLongError(StabilsimError, ValueError):
    """An averaging window exceeds the waveform's time span."""


class EmptySeriesError(StabilsimError, ValueError):
    """A voltage series holds no samples."""


class InsufficientPointsError(StabilsimError, ValueError):
    """Fewer than two converged sweep points; regulation is undefined."""
