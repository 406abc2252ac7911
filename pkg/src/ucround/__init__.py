"""Relax-and-round unit commitment for large fleets of small generators."""

__version__ = "0.1.0"

from .costfit import BidCurve, FitOptions, QuadraticFit, bid_curve_to_generator, fit_quadratic, integrate_bid_curve
from .dispatch import DispatchResult, check_reserve, dispatch
from .errors import CurveError, FleetValidationError, InfeasibleError, UCError
from .fleet import Fleet, Generator, ReserveRequirement, load_fleet, replicate_fleet, reserve_requirement
from .oracle import OracleResult, exhaustive_uc
from .relaxed import RelaxedSolution, solve_relaxed
from .rounding import CommitmentSolution, minimal_prefix, order_by_y, rruc, rruc_with_stride

__all__ = [
    "BidCurve", "CommitmentSolution", "CurveError", "DispatchResult", "FitOptions", "Fleet",
    "FleetValidationError", "Generator", "InfeasibleError", "OracleResult", "QuadraticFit",
    "RelaxedSolution", "ReserveRequirement", "UCError", "bid_curve_to_generator", "check_reserve",
    "dispatch", "exhaustive_uc", "fit_quadratic", "integrate_bid_curve", "load_fleet", "minimal_prefix",
    "order_by_y", "replicate_fleet", "reserve_requirement", "rruc", "rruc_with_stride", "solve_relaxed",
]
