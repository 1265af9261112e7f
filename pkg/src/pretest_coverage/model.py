"""Two-stage Woolf analysis of two stratified 2x2 case-control tables.

A study has two strata; stratum ``i`` contributes independent binomial counts
``Y_i ~ Binomial(n_i, p_i)`` (exposed cases) and ``Y_i' ~ Binomial(n_i', p_i')``
(exposed controls).  The parameter of interest per stratum is the log odds
ratio ``theta_i = logit(p_i) - logit(p_i')``.

The analysis implemented here first tests homogeneity ``theta_1 = theta_2``
at level ``beta`` using the Woolf statistic.  On rejection it reports two
separate Wald intervals, each at two-sided level ``sqrt(1 - alpha)`` so their
product is ``1 - alpha``; on acceptance it reports one precision-weighted
pooled interval at level ``1 - alpha`` for both parameters.

All probability estimates use the half-adjusted proportions
``(y + 1/2) / (n + 1)``, which keep every estimator and variance finite for
all observable counts.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import NamedTuple

from scipy.special import ndtri

from .errors import InputDomainError

__all__ = [
    "StudyDesign",
    "CellProbs",
    "ObservedTables",
    "SearchStage",
    "AnalysisConfig",
    "Interval",
    "WoolfSummary",
    "TwoStageResult",
    "PAPER_DESIGN",
    "PAPER_SCHEDULE",
    "adjusted_props",
    "woolf_summary",
    "two_sided_quantile",
    "normal_quantiles",
    "two_stage_intervals",
]


def _as_int(name: str, value) -> int:
    try:
        return operator.index(value)
    except TypeError:
        raise InputDomainError(f"{name} must be an integer, got {value!r}") from None


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class StudyDesign:
    """Sample sizes (cases1, controls1, cases2, controls2) of a two-stratum design."""

    n1: int
    n1p: int
    n2: int
    n2p: int

    def __post_init__(self):
        for name in ("n1", "n1p", "n2", "n2p"):
            value = _as_int(name, getattr(self, name))
            if value < 1:
                raise InputDomainError(f"{name} must be >= 1, got {value}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n1, self.n1p, self.n2, self.n2p)

    def scaled(self, factor: int) -> "StudyDesign":
        """The design with every sample size multiplied by ``factor``."""
        factor = _as_int("factor", factor)
        if factor < 1:
            raise InputDomainError(f"factor must be >= 1, got {factor}")
        return StudyDesign(self.n1 * factor, self.n1p * factor,
                           self.n2 * factor, self.n2p * factor)

    def outcome_count(self) -> int:
        """Number of distinct observable count vectors (y1, y1', y2, y2')."""
        return (self.n1 + 1) * (self.n1p + 1) * (self.n2 + 1) * (self.n2p + 1)


#: Case/control sample sizes of the coffee-consumption study used throughout.
PAPER_DESIGN = StudyDesign(1092, 467, 449, 488)


@dataclass(frozen=True)
class CellProbs:
    """A parameter point: exposure probabilities per cell, all strictly in (0, 1)."""

    p1: float
    p1p: float
    p2: float
    p2p: float

    def __post_init__(self):
        for name in ("p1", "p1p", "p2", "p2p"):
            value = float(getattr(self, name))
            if not (0.0 < value < 1.0):
                raise InputDomainError(f"{name} must lie strictly in (0, 1), got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def theta1(self) -> float:
        """Log odds ratio of stratum 1."""
        return _logit(self.p1) - _logit(self.p1p)

    @property
    def theta2(self) -> float:
        """Log odds ratio of stratum 2."""
        return _logit(self.p2) - _logit(self.p2p)

    @property
    def psi1(self) -> float:
        return math.exp(self.theta1)

    @property
    def psi2(self) -> float:
        return math.exp(self.theta2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p1, self.p1p, self.p2, self.p2p)

    def within_margin(self, epsilon: float) -> bool:
        """True when every probability lies in the closed box [eps, 1-eps]."""
        if not 0.0 < epsilon < 0.5:
            raise InputDomainError(f"epsilon must lie in (0, 0.5), got {epsilon!r}")
        return all(epsilon <= p <= 1.0 - epsilon for p in self.as_tuple())


@dataclass(frozen=True)
class ObservedTables:
    """Observed exposed counts (y1, y1', y2, y2') for one realized study."""

    y1: int
    y1p: int
    y2: int
    y2p: int

    def __post_init__(self):
        for name in ("y1", "y1p", "y2", "y2p"):
            value = _as_int(name, getattr(self, name))
            if value < 0:
                raise InputDomainError(f"{name} must be >= 0, got {value}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.y1, self.y1p, self.y2, self.y2p)

    def validate_against(self, design: StudyDesign) -> None:
        """Raise InputDomainError unless every count fits its sample size."""
        for cname, nname, y, n in zip(
            ("y1", "y1p", "y2", "y2p"),
            ("n1", "n1p", "n2", "n2p"),
            self.as_tuple(),
            design.as_tuple(),
        ):
            if y > n:
                raise InputDomainError(f"{cname}={y} exceeds {nname}={n}")


@dataclass(frozen=True)
class SearchStage:
    """One stage of the staged minimum-coverage search: simulation size and
    how many lowest-estimate candidates survive into the next stage."""

    reps: int
    keep: int

    def __post_init__(self):
        object.__setattr__(self, "reps", _as_int("reps", self.reps))
        object.__setattr__(self, "keep", _as_int("keep", self.keep))
        if self.reps < 1:
            raise InputDomainError(f"stage reps must be >= 1, got {self.reps}")
        if self.keep < 1:
            raise InputDomainError(f"stage keep must be >= 1, got {self.keep}")


#: Default search schedule: 10^4 reps everywhere, 2*10^5 on the 10 lowest,
#: 10^6 on the single lowest.
PAPER_SCHEDULE = (
    SearchStage(10_000, 10),
    SearchStage(200_000, 1),
    SearchStage(1_000_000, 1),
)


@dataclass(frozen=True)
class AnalysisConfig:
    """Analysis-wide settings with the defaults used for all headline numbers.

    ``alpha`` is the nominal simultaneous non-coverage, ``beta`` the nominal
    level of the homogeneity pretest, ``epsilon`` the margin defining the
    parameter box [eps, 1-eps]^4, ``h`` the search grid step, ``mc_schedule``
    the staged Monte Carlo search schedule and ``seed`` the global RNG seed.
    """

    alpha: float = 0.05
    beta: float = 0.05
    epsilon: float = 0.02
    h: float = 0.096
    mc_schedule: tuple[SearchStage, ...] = PAPER_SCHEDULE
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputDomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not 0.0 < self.beta <= 1.0:
            raise InputDomainError(f"beta must lie in (0, 1], got {self.beta!r}")
        if not 0.0 < self.epsilon < 0.5:
            raise InputDomainError(f"epsilon must lie in (0, 0.5), got {self.epsilon!r}")
        if not self.h > 0.0:
            raise InputDomainError(f"h must be > 0, got {self.h!r}")
        schedule = tuple(
            stage if isinstance(stage, SearchStage) else SearchStage(*stage)
            for stage in self.mc_schedule
        )
        if not schedule:
            raise InputDomainError("mc_schedule must contain at least one stage")
        object.__setattr__(self, "mc_schedule", schedule)
        object.__setattr__(self, "seed", _as_int("seed", self.seed))


_EMPTY_MARKER = (math.inf, -math.inf)


@dataclass(frozen=True)
class Interval:
    """A closed interval on the log-odds scale; ``Interval.empty()`` marks
    an empty intersection."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise InputDomainError("interval endpoints must not be NaN")
        if lo > hi and (lo, hi) != _EMPTY_MARKER:
            raise InputDomainError(f"interval endpoints out of order: [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def empty(cls) -> "Interval":
        return cls(*_EMPTY_MARKER)

    @property
    def is_empty(self) -> bool:
        return (self.lo, self.hi) == _EMPTY_MARKER

    @property
    def width(self) -> float:
        return 0.0 if self.is_empty else self.hi - self.lo

    def contains(self, x: float) -> bool:
        """Closed-interval membership; endpoints count."""
        return (not self.is_empty) and self.lo <= x <= self.hi

    def intersect(self, other: "Interval") -> "Interval":
        if self.is_empty or other.is_empty:
            return Interval.empty()
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval.empty() if lo > hi else Interval(lo, hi)

    def to_odds_scale(self) -> "Interval":
        """Exp-transformed view: the same interval for the odds ratio."""
        if self.is_empty:
            return Interval.empty()
        return Interval(math.exp(self.lo), math.exp(self.hi))


@dataclass(frozen=True)
class WoolfSummary:
    """Per-stratum Woolf estimates plus the homogeneity statistic.

    ``theta_hat1/2`` estimate the log odds ratios, ``sigma_hat_sq1/2`` their
    variances, ``t_hat`` the standardized difference used by the pretest and
    ``theta_hat_pooled`` the precision-weighted common estimate.
    """

    theta_hat1: float
    theta_hat2: float
    sigma_hat_sq1: float
    sigma_hat_sq2: float
    t_hat: float
    theta_hat_pooled: float


class TwoStageResult(NamedTuple):
    """Intervals selected by the two-stage rule plus the branch taken."""

    interval1: Interval
    interval2: Interval
    rejected: bool


def adjusted_props(design: StudyDesign, tables: ObservedTables
                   ) -> tuple[float, float, float, float]:
    """Half-adjusted exposure proportion estimates (y + 1/2) / (n + 1).

    Strictly inside (0, 1) for every admissible count, including y = 0 and
    y = n, which is what keeps the log-odds machinery singularity-free.
    """
    tables.validate_against(design)
    return tuple(
        (y + 0.5) / (n + 1.0)
        for y, n in zip(tables.as_tuple(), design.as_tuple())
    )


def woolf_summary(design: StudyDesign, tables: ObservedTables) -> WoolfSummary:
    """All sample-level statistics the two-stage analysis consumes.

    Estimates, variances and the test statistic are computed from the
    half-adjusted proportions, so every field is finite for any admissible
    counts.
    """
    ph1, ph1p, ph2, ph2p = adjusted_props(design, tables)
    theta1 = _logit(ph1) - _logit(ph1p)
    theta2 = _logit(ph2) - _logit(ph2p)
    var1 = _woolf_variance(design.n1, design.n1p, ph1, ph1p)
    var2 = _woolf_variance(design.n2, design.n2p, ph2, ph2p)
    t_hat = (theta1 - theta2) / math.sqrt(var1 + var2)
    weight1, weight2 = 1.0 / var1, 1.0 / var2
    pooled = (theta1 * weight1 + theta2 * weight2) / (weight1 + weight2)
    return WoolfSummary(theta1, theta2, var1, var2, t_hat, pooled)


def _woolf_variance(n: int, n_prime: int, p: float, p_prime: float) -> float:
    return (1.0 / n) * (1.0 / p + 1.0 / (1.0 - p)) \
        + (1.0 / n_prime) * (1.0 / p_prime + 1.0 / (1.0 - p_prime))


def two_sided_quantile(level: float) -> float:
    """The c >= 0 with P(-c <= Z <= c) = 1 - level for standard normal Z.

    ``level`` is the two-sided non-coverage in [0, 1]; ``level=0`` gives
    +inf and ``level=1`` gives 0.  Accurate to the precision of the
    underlying inverse-normal routine (|Phi(c) - target| < 1e-12).
    """
    if not 0.0 <= level <= 1.0:
        raise InputDomainError(f"quantile level must lie in [0, 1], got {level!r}")
    if level == 0.0:
        return math.inf
    return float(ndtri(1.0 - 0.5 * level))


def normal_quantiles(alpha: float, beta: float) -> tuple[float, float, float]:
    """The three critical values (c_alpha, c_tilde_alpha, c_beta).

    ``c_alpha`` is the two-sided quantile at non-coverage ``alpha``;
    ``c_tilde_alpha`` the (larger) quantile putting ``sqrt(1 - alpha)``
    between -c and c, used by the separate intervals so their product
    coverage is ``1 - alpha``; ``c_beta`` the pretest critical value,
    with ``beta = 1`` giving 0 (always reject).
    """
    if not 0.0 < alpha < 1.0:
        raise InputDomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not 0.0 < beta <= 1.0:
        raise InputDomainError(f"beta must lie in (0, 1], got {beta!r}")
    c_alpha = two_sided_quantile(alpha)
    c_tilde_alpha = two_sided_quantile(1.0 - math.sqrt(1.0 - alpha))
    c_beta = two_sided_quantile(beta)
    return c_alpha, c_tilde_alpha, c_beta


def two_stage_intervals(design: StudyDesign, tables: ObservedTables,
                        config: AnalysisConfig) -> TwoStageResult:
    """Confidence intervals for (theta_1, theta_2) selected by the pretest.

    Rejects homogeneity iff |t_hat| > c_beta (the tie |t_hat| = c_beta
    accepts).  On rejection the result holds the two separate Woolf
    intervals at per-interval level sqrt(1 - alpha); on acceptance both
    returned intervals are the identical pooled interval at level
    1 - alpha.
    """
    summary = woolf_summary(design, tables)
    c_alpha, c_tilde_alpha, c_beta = normal_quantiles(config.alpha, config.beta)
    rejected = abs(summary.t_hat) > c_beta
    if rejected:
        half1 = c_tilde_alpha * math.sqrt(summary.sigma_hat_sq1)
        half2 = c_tilde_alpha * math.sqrt(summary.sigma_hat_sq2)
        first = Interval(summary.theta_hat1 - half1, summary.theta_hat1 + half1)
        second = Interval(summary.theta_hat2 - half2, summary.theta_hat2 + half2)
    else:
        pooled_var = 1.0 / (1.0 / summary.sigma_hat_sq1 + 1.0 / summary.sigma_hat_sq2)
        half = c_alpha * math.sqrt(pooled_var)
        first = second = Interval(summary.theta_hat_pooled - half,
                                  summary.theta_hat_pooled + half)
    return TwoStageResult(first, second, rejected)
