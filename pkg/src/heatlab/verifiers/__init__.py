"""Checkers for heat-kernel inequalities on model and sampled spaces."""

from .core import (
    ANALYTIC_TOL,
    DISCRETE_TOL,
    CheckResult,
    GridSpec,
    Margins,
    comparison_volume,
    fit_sup_ratio,
    log_grid,
    omega,
    tau,
)
from .differential import (
    check_bakry_ledoux,
    check_caccioppoli,
    check_harnack,
    check_laplacian_comparison,
    check_li_yau,
    check_weighted_contraction,
)
from .geometry import (
    check_boundary_calculus,
    check_compactness,
    check_doubling_poincare,
    check_large_time,
    check_stability,
)
from .kernel_bounds import (
    check_gaussian_bounds,
    check_gradient_bound,
    check_integrated_lower_bound,
    check_time_derivative,
)
from .operators import check_davies_gaffney, check_riesz, check_semigroup_axioms
from .registry import SUITES, SpaceHandle, run_suite, suite_names
from .sources import AnalyticSource, DiscreteSource, as_source

__all__ = [
    "ANALYTIC_TOL",
    "DISCRETE_TOL",
    "AnalyticSource",
    "CheckResult",
    "DiscreteSource",
    "GridSpec",
    "Margins",
    "SUITES",
    "SpaceHandle",
    "as_source",
    "check_bakry_ledoux",
    "check_boundary_calculus",
    "check_caccioppoli",
    "check_compactness",
    "check_davies_gaffney",
    "check_doubling_poincare",
    "check_gaussian_bounds",
    "check_gradient_bound",
    "check_harnack",
    "check_integrated_lower_bound",
    "check_laplacian_comparison",
    "check_large_time",
    "check_li_yau",
    "check_riesz",
    "check_semigroup_axioms",
    "check_stability",
    "check_time_derivative",
    "check_weighted_contraction",
    "comparison_volume",
    "fit_sup_ratio",
    "log_grid",
    "omega",
    "run_suite",
    "suite_names",
    "tau",
]
