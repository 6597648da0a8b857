"""Joint trajectory, IRS scheduling and OFDMA resource allocation for an
IRS-assisted UAV downlink, with Rician-fading outage evaluation."""

from .channel import IrsSpec, OfdmNumerology, UserSpec
from .errors import (ConfigError, DegenerateGeometry, Infeasible, InvalidAlpha, IrsUavError,
                     SubproblemInfeasible)
from .planner import PlannerOptions, Solution, alternate
from .scenario import Scenario, UavLimits, desk_scenario, random_scenario

__all__ = [
    "ConfigError",
    "DegenerateGeometry",
    "Infeasible",
    "InvalidAlpha",
    "IrsSpec",
    "IrsUavError",
    "OfdmNumerology",
    "PlannerOptions",
    "Scenario",
    "Solution",
    "SubproblemInfeasible",
    "UavLimits",
    "UserSpec",
    "alternate",
    "desk_scenario",
    "random_scenario",
]

__version__ = "0.1.0"
