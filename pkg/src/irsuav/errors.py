"""Exception types shared across the package."""


class IrsUavError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(IrsUavError, ValueError):
    """A horizontal range needed by an angle formula is zero."""


class InvalidAlpha(IrsUavError, ValueError):
    """Approximation parameter outside the open interval (0, 0.25)."""


class InconsistentAllocation(IrsUavError, ValueError):
    """Positive power on a time-sharing variable that is zero."""


class ZeroDual(IrsUavError, ValueError):
    """Power multiplier is zero so the water level is undefined."""


class Infeasible(IrsUavError):
    """Minimum-rate constraints cannot be met."""


class SubproblemInfeasible(Infeasible):
    """Trajectory step cannot satisfy the surrogate rate constraints."""


class ConfigError(IrsUavError, ValueError):
    """Scenario file is malformed; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
