"""Exception types shared across the package.

The CLI maps these onto exit codes: ParseError and I/O problems exit 3,
numerical failures (DomainError, IntegrationError, FitError) exit 4.
"""

__all__ = [
    "CirBridgeError",
    "DomainError",
    "IntegrationError",
    "ParseError",
    "GridMismatchError",
    "TooFewDaysError",
    "FitError",
    "DegenerateFitError",
    "NoFeasibleStartError",
]


class CirBridgeError(Exception):
    """Base class for package-specific failures."""


class DomainError(CirBridgeError, ValueError):
    """An operation was evaluated outside its mathematical domain."""


class IntegrationError(CirBridgeError, RuntimeError):
    """An ODE integration could not meet its tolerance or lost finiteness."""


class ParseError(CirBridgeError, ValueError):
    """A data file violated its documented format (message carries the line)."""


class GridMismatchError(CirBridgeError, ValueError):
    """Two curves were combined but live on different grids."""


class TooFewDaysError(CirBridgeError, ValueError):
    """Empirical curves require at least two retained days."""


class FitError(CirBridgeError, RuntimeError):
    """Least-squares calibration failed."""


class DegenerateFitError(FitError):
    """Every candidate in the reversion scan produced a nonpositive source."""


class NoFeasibleStartError(FitError):
    """No feasible starting point for the derivative-free stage."""
