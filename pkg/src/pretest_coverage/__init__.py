"""Simultaneous coverage of two-stage (pretest) Woolf odds-ratio intervals.

The library quantifies what a preliminary homogeneity test does to the
simultaneous coverage of the resulting confidence intervals for two
stratum-specific log odds ratios, by three independent routes: binomial
Monte Carlo, exact enumeration, and an exact large-sample decomposition
evaluated by kink-aware quadrature.
"""

from .asymptotic import (
    AsymptoticParams,
    GridMinResult,
    QuadratureSpec,
    accept_branch_prob,
    asymptotic_coverage,
    asymptotic_grid_min,
    asymptotic_params,
    coverage_from_params,
    no_pretest_coverage,
    reject_branch_prob,
)
from .boundary import (
    ContourGrid,
    ScalingPoint,
    ScanGeometry,
    contour_grid,
    lambda_taylor,
    partial_min_coverage,
    scaling_study,
    scan_geometry,
)
from .errors import (
    InputDomainError,
    OutcomeBudgetError,
    PretestCoverageError,
    QuadratureError,
)
from .finite_sample import (
    McEstimate,
    SearchResult,
    StageTrace,
    enumerate_coverage,
    mc_coverage,
    min_coverage_search,
    probability_grid,
)
from .model import (
    PAPER_DESIGN,
    PAPER_SCHEDULE,
    AnalysisConfig,
    CellProbs,
    Interval,
    ObservedTables,
    SearchStage,
    StudyDesign,
    TwoStageResult,
    WoolfSummary,
    adjusted_props,
    normal_quantiles,
    two_sided_quantile,
    two_stage_intervals,
    woolf_summary,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "StudyDesign", "CellProbs", "ObservedTables", "SearchStage", "AnalysisConfig",
    "Interval", "WoolfSummary", "TwoStageResult", "PAPER_DESIGN", "PAPER_SCHEDULE",
    "adjusted_props", "woolf_summary", "two_sided_quantile", "normal_quantiles",
    "two_stage_intervals",
    # finite sample
    "McEstimate", "StageTrace", "SearchResult", "probability_grid", "mc_coverage",
    "enumerate_coverage", "min_coverage_search",
    # asymptotic
    "AsymptoticParams", "QuadratureSpec", "GridMinResult", "asymptotic_params",
    "accept_branch_prob", "reject_branch_prob", "asymptotic_coverage",
    "coverage_from_params", "no_pretest_coverage", "asymptotic_grid_min",
    # boundary scan
    "ScanGeometry", "ContourGrid", "ScalingPoint", "scan_geometry",
    "partial_min_coverage", "contour_grid", "lambda_taylor", "scaling_study",
    # errors
    "PretestCoverageError", "InputDomainError", "OutcomeBudgetError",
    "QuadratureError",
]
