"""
Error kinds raised by the co-state fusion pipeline.

The following classes are available:

    * :class `FusionError`
    * :class `InvalidStateError`
    * :class `InvalidIntervalError`
    * :class `WarmupIncompleteError`
    * :class `DegenerateClusterError`
    * :class `UnreachableHazardError`
    * :class `DegenerateDwellError`
    * :class `InvalidPriorError`
    * :class `InputFormatError`
    * :class `NumericalFailureError`
"""
from typing import Iterable, Optional


class FusionError(Exception):
    """Base class of every error raised by this package."""


class InvalidStateError(FusionError, ValueError):
    """A state vector with non-finite or wrongly shaped components."""


class InvalidIntervalError(FusionError, ValueError):
    """A sampling interval that is not strictly positive."""


class WarmupIncompleteError(FusionError):
    """Not enough distinct samples to initialize a clustering."""


class DegenerateClusterError(FusionError):
    """A mode referenced by a trajectory has no members."""


class UnreachableHazardError(FusionError, ArithmeticError):
    """
    The hazard set cannot be reached from some transient modes.

    Parameters
    ----------
    modes : iterable of int
        Transient modes from which the hazard set is unreachable.
    """
    def __init__(self, modes: Iterable[int], message: Optional[str] = None):
        self.modes = sorted(int(m) for m in modes)
        if message is None:
            message = f"Hazard set unreachable from modes {self.modes}"
        super().__init__(message)


class DegenerateDwellError(FusionError, ValueError):
    """A mode has observed jumps but zero dwell time."""


class InvalidPriorError(FusionError, ValueError):
    """A prior probability vector with no mass."""


class InputFormatError(FusionError, ValueError):
    """
    Malformed telemetry input.

    Parameters
    ----------
    message : str
        Description of the problem.
    line : int, optional
        1-based line number in the source file, header included.
    """
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalFailureError(FusionError, ArithmeticError):
    """A numerical routine produced non-finite output."""
