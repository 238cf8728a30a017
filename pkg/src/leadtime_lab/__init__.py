"""Lead-time distribution analytics: L1 divergence, STL, pickup forecasts and their error bound."""

__version__ = "0.1.0"

from .distribution import LeadTimeDistribution, build_distribution, describe, pickup_curve
from .divergence import l1_distance, yoy_series, baseline_series, partial_l1, early_warning, correlate
from .decompose import StlParams, stl_decompose, loess_smooth
from .ingest import BookingRecord, Month, Market, parse_bookings, group_by_month
from .pickup import pickup_forecast, relative_error, error_bound, evaluate_horizon_sweep
from .simulate import make_bville_fixture, make_figure1_pair, generate_scenario, perturb_distribution

__all__ = [
    "BookingRecord", "LeadTimeDistribution", "Market", "Month", "StlParams",
    "baseline_series", "build_distribution", "correlate", "describe", "early_warning", "error_bound",
    "evaluate_horizon_sweep", "generate_scenario", "group_by_month", "l1_distance", "loess_smooth",
    "make_bville_fixture", "make_figure1_pair", "parse_bookings", "partial_l1", "perturb_distribution",
    "pickup_curve", "pickup_forecast", "relative_error", "stl_decompose", "yoy_series",
]
