"""Exception types raised across the package."""

from __future__ import annotations


class NetPanelError(Exception):
    """Base class for all package-specific errors."""


class NonContiguousWindow(NetPanelError):
    """A unit's observed periods contain a gap.

    Each unit must be observed over one contiguous block of periods:
    the unbalancedness comes from entry and exit, not missing cells.
    """

    def __init__(self, unit: int, periods=None):
        self.unit = unit
        self.periods = periods
        msg = f"unit {unit} has a gap in its observation window"
        if periods is not None:
            msg += f" (observed periods: {sorted(periods)})"
        super().__init__(msg)


class EmptyPeriod(NetPanelError):
    """An estimation period has no observed units."""

    def __init__(self, period: int):
        self.period = period
        super().__init__(f"no units observed in estimation period {period}")


class ShapeMismatch(NetPanelError):
    """Array dimensions do not match the panel layout."""


class InvalidCoordinate(NetPanelError):
    """A latitude/longitude pair is outside the valid range or non-finite."""


class MissingInitialPeriod(NetPanelError):
    """Regressors need outcomes in period 0 but none were supplied."""


class SingularAtRho(NetPanelError):
    """I - rho * W_t is numerically singular at the requested rho."""

    def __init__(self, rho: float, period: int | None = None):
        self.rho = rho
        self.period = period
        where = "" if period is None else f" in period {period}"
        super().__init__(f"I - rho*W is singular at rho={rho}{where}")


class SingularS(NetPanelError):
    """The contemporaneous-system matrix is singular during simulation."""

    def __init__(self, period: int):
        self.period = period
        super().__init__(f"I - rho*W_t singular when simulating period {period}")


class SingularDesign(NetPanelError):
    """The within-projected regressor cross-product is rank deficient."""

    def __init__(self, message: str, column: int | None = None):
        self.column = column
        super().__init__(message)


class SingularHessian(NetPanelError):
    """The estimated Hessian cannot be inverted."""


class BoundaryMaximum(NetPanelError):
    """The profile maximizer of rho sits on the boundary of its interval.

    Reported via diagnostics during fitting; raised only when the caller
    asks for strict behaviour.
    """


class NonFiniteEntry(NetPanelError):
    """A derivative or matrix entry evaluated to NaN or infinity."""


class Unattainable(NetPanelError):
    """The requested unbalancedness target cannot be reached."""

    def __init__(self, target: float, reachable: tuple[float, float] | None = None):
        self.target = target
        msg = f"target unbalancedness {target} is not attainable"
        if reachable is not None:
            msg += f" (reachable range is about [{reachable[0]:.3f}, {reachable[1]:.3f}])"
        super().__init__(msg)


class TooManyFailures(NetPanelError):
    """More than the tolerated share of Monte Carlo replications failed."""

    def __init__(self, failed: int, total: int):
        self.failed = failed
        self.total = total
        super().__init__(f"{failed} of {total} replications failed (> 5% tolerated)")


class SchemaError(NetPanelError):
    """A panel CSV file does not satisfy the declared schema."""

    def __init__(self, message: str, column: str | None = None):
        self.column = column
        super().__init__(message)


class DuplicateCell(NetPanelError):
    """A (unit, period) pair appears more than once in an input file."""

    def __init__(self, unit, period):
        self.unit = unit
        self.period = period
        super().__init__(f"duplicate observation for unit {unit!r} in period {period!r}")


class ConfigError(NetPanelError):
    """A run configuration is missing required fields or is inconsistent."""


class IoError(NetPanelError):
    """Reading or writing an artifact failed."""
