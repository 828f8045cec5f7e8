"""Optimal stopping toolkit for the Brownian sheet.

Closed-form hitting values and thresholds, Monte Carlo verification of
the hitting-point Laplace transform and field identities, and a
discretized least-concave-majorant engine with continuation regions.
"""

__version__ = "0.1.0"

from .analytics import (
    DiscountConfig,
    Reward,
    ValueCurve,
    baseline_levels,
    hitting_threshold,
    hitting_value,
    integrated_threshold,
    integrated_value,
    sample_curve,
    threshold_root,
)
from .errors import BracketError, ConfigurationError, ConvergenceError, DomainError
from .hitting import (
    HittingRule,
    ReplicationHandle,
    StoppingPoint,
    default_budget,
    first_hit,
    hit_independence_check,
)
from .majorant import (
    ContinuationRegion,
    GridFunction,
    SdeConfig,
    continuation_region,
    default_variance_grid,
    iterate_gn,
    least_concave_majorant,
    nested_regions_check,
)
from .montecarlo import (
    McConfig,
    McEstimate,
    check_exponential_martingale,
    check_isometry,
    check_second_moment,
    estimate_discounted_reward,
    estimate_integrated,
    estimate_laplace,
)
from .sheet import (
    GridSpec,
    RngPolicy,
    SheetGrid,
    extend_sheet,
    generate_sheet,
    sheet_value_at,
    substream_generator,
)
from .special import (
    QuadratureConfig,
    RootConfig,
    exp_integral_e1,
    integrate_semi_infinite,
    solve_bracketed,
)

__all__ = [
    "__version__",
    "DiscountConfig", "Reward", "ValueCurve", "baseline_levels",
    "hitting_threshold", "hitting_value", "integrated_threshold",
    "integrated_value", "sample_curve", "threshold_root",
    "BracketError", "ConfigurationError", "ConvergenceError", "DomainError",
    "HittingRule", "ReplicationHandle", "StoppingPoint", "default_budget",
    "first_hit", "hit_independence_check",
    "ContinuationRegion", "GridFunction", "SdeConfig", "continuation_region",
    "default_variance_grid", "iterate_gn", "least_concave_majorant",
    "nested_regions_check",
    "McConfig", "McEstimate", "check_exponential_martingale", "check_isometry",
    "check_second_moment", "estimate_discounted_reward", "estimate_integrated",
    "estimate_laplace",
    "GridSpec", "RngPolicy", "SheetGrid", "extend_sheet", "generate_sheet",
    "sheet_value_at", "substream_generator",
    "QuadratureConfig", "RootConfig", "exp_integral_e1",
    "integrate_semi_infinite", "solve_bracketed",
]
