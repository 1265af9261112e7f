"""Exact two-stage coverage under the large-sample normal model.

Treat the two log-odds estimators as independent normals with known
variances: ``Theta_hat_i ~ N(theta_i, sigma_i^2)``.  The pretest statistic
``T = (Theta_hat_1 - Theta_hat_2) / sqrt(sigma_1^2 + sigma_2^2)`` is then
``N(lambda, 1)`` and the simultaneous coverage of the two-stage intervals
splits exactly into

* an acceptance term ``P(Theta_hat_pooled in K1 ∩ K2) * P(|T| <= c_beta)``
  (the pooled estimator and T are independent), available in closed form,
  and
* a rejection term ``(1 - alpha) - I`` where ``I`` is a one-dimensional
  integral of ``g(z) * phi(z)`` over ``[-c~, c~]``.  ``g`` is smooth except
  at up to four points where an endpoint of the moving interval crosses an
  endpoint of the fixed one; the integral is evaluated piecewise between
  those kinks with adaptive Gauss-Kronrod quadrature.

``beta`` may be 0 here (never reject; ``c_beta = +inf``), unlike in the
finite-sample analysis where the pretest is actually carried out.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import InputDomainError, QuadratureError
from .finite_sample import _flat_to_probs, probability_grid
from .model import CellProbs, StudyDesign, two_sided_quantile

__all__ = [
    "AsymptoticParams",
    "QuadratureSpec",
    "GridMinResult",
    "asymptotic_params",
    "accept_branch_prob",
    "reject_branch_prob",
    "asymptotic_coverage",
    "coverage_from_params",
    "no_pretest_coverage",
    "asymptotic_grid_min",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AsymptoticParams:
    """Means and known variances of the two log-odds estimators."""

    theta1: float
    theta2: float
    sigma_sq1: float
    sigma_sq2: float

    def __post_init__(self):
        for name in ("theta1", "theta2"):
            if not math.isfinite(getattr(self, name)):
                raise InputDomainError(f"{name} must be finite")
        for name in ("sigma_sq1", "sigma_sq2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InputDomainError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def lam(self) -> float:
        """Mean of the pretest statistic: (theta1 - theta2)/sqrt(s1^2 + s2^2)."""
        return (self.theta1 - self.theta2) / math.sqrt(self.sigma_sq1 + self.sigma_sq2)

    @property
    def w(self) -> float:
        """Variance of the pooled estimator: 1 / (1/s1^2 + 1/s2^2)."""
        return 1.0 / (1.0 / self.sigma_sq1 + 1.0 / self.sigma_sq2)

    @property
    def theta_av(self) -> float:
        """Mean of the pooled estimator (precision-weighted average)."""
        return (self.theta1 / self.sigma_sq1 + self.theta2 / self.sigma_sq2) * self.w


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for the rejection-branch integral."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_subdivisions: int = 100

    def __post_init__(self):
        if not self.abs_tol > 0.0:
            raise InputDomainError(f"abs_tol must be > 0, got {self.abs_tol!r}")
        if not self.rel_tol > 0.0:
            raise InputDomainError(f"rel_tol must be > 0, got {self.rel_tol!r}")
        if self.max_subdivisions < 1:
            raise InputDomainError(
                f"max_subdivisions must be >= 1, got {self.max_subdivisions!r}")


@dataclass(frozen=True)
class GridMinResult:
    """Grid minimum of the large-sample coverage, with all attaining points.

    ``argmins`` lists every grid point whose coverage is within ``tie_tol``
    of the minimum, in lexicographic grid order.  Points whose quadrature
    failed are reported in ``failures`` and excluded from the minimum.
    """

    min_coverage: float
    argmins: tuple[CellProbs, ...]
    tie_tol: float
    failures: tuple[tuple[CellProbs, str], ...]


def _population_variance(n: int, n_prime: int, p: float, p_prime: float) -> float:
    return (1.0 / n) * (1.0 / p + 1.0 / (1.0 - p)) \
        + (1.0 / n_prime) * (1.0 / p_prime + 1.0 / (1.0 - p_prime))


def asymptotic_params(design: StudyDesign, p: CellProbs) -> AsymptoticParams:
    """Large-sample model parameters at the parameter point ``p``."""
    return AsymptoticParams(
        theta1=p.theta1,
        theta2=p.theta2,
        sigma_sq1=_population_variance(design.n1, design.n1p, p.p1, p.p1p),
        sigma_sq2=_population_variance(design.n2, design.n2p, p.p2, p.p2p),
    )


def _check_levels(alpha: float, beta: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InputDomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not 0.0 <= beta <= 1.0:
        raise InputDomainError(f"beta must lie in [0, 1], got {beta!r}")


def accept_branch_prob(params: AsymptoticParams, alpha: float, beta: float) -> float:
    """P(both thetas in the pooled interval AND the pretest accepts).

    Factorizes as P(pooled estimator in K1 ∩ K2) * P(|T| <= c_beta) because
    the pooled estimator and T are independent.  K_i is the interval of
    pooled-estimator values whose interval covers theta_i; the intersection
    contributes 0 when its endpoints touch or cross.
    """
    _check_levels(alpha, beta)
    c_alpha = two_sided_quantile(alpha)
    c_beta = two_sided_quantile(beta)
    half = c_alpha * math.sqrt(params.w)
    lo = max(params.theta1, params.theta2) - half
    hi = min(params.theta1, params.theta2) + half
    if lo >= hi:
        return 0.0
    scale = math.sqrt(params.w)
    p_pooled = float(ndtr((hi - params.theta_av) / scale)
                     - ndtr((lo - params.theta_av) / scale))
    if math.isinf(c_beta):
        p_accept = 1.0
    else:
        p_accept = float(ndtr(c_beta - params.lam) - ndtr(-c_beta - params.lam))
    return p_pooled * p_accept


def _moving_interval_geometry(params: AsymptoticParams, beta: float
                              ) -> tuple[float, float, float]:
    """Slope, half-width and offset of the acceptance band in the (z1, z2)
    plane: accept iff z1 lies in [s*z2 - d - m, s*z2 + d - m]."""
    ratio_sq = params.sigma_sq2 / params.sigma_sq1
    slope = math.sqrt(ratio_sq)
    half_width = two_sided_quantile(beta) * math.sqrt(1.0 + ratio_sq)
    offset = (params.theta1 - params.theta2) / math.sqrt(params.sigma_sq1)
    return slope, half_width, offset


def _kink_points(slope: float, half_width: float, offset: float,
                 c_tilde: float) -> list[float]:
    """Solutions of the four endpoint-equality equations inside (-c~, c~).

    Each equation (moving endpoint = fixed endpoint) is linear in z2 with
    slope != 0, so the solutions are closed-form; duplicates within 1e-12
    are merged.  At most four survive.
    """
    raw = (
        (offset + half_width - c_tilde) / slope,
        (offset + half_width + c_tilde) / slope,
        (offset - half_width - c_tilde) / slope,
        (offset - half_width + c_tilde) / slope,
    )
    kinks: list[float] = []
    for z in sorted(z for z in raw if -c_tilde < z < c_tilde):
        if not kinks or z - kinks[-1] > 1e-12:
            kinks.append(z)
    return kinks


def _band_mass(z: float, slope: float, half_width: float, offset: float,
               c_tilde: float) -> float:
    """Standard normal mass of [-c~, c~] ∩ [slope*z - hw - off, slope*z + hw - off]."""
    lo = max(-c_tilde, slope * z - half_width - offset)
    hi = min(c_tilde, slope * z + half_width - offset)
    if lo >= hi:
        return 0.0
    return float(ndtr(hi) - ndtr(lo))


def reject_branch_prob(params: AsymptoticParams, alpha: float, beta: float,
                       quad: QuadratureSpec | None = None) -> float:
    """P(both thetas in their separate intervals AND the pretest rejects).

    Computed as (1 - alpha) minus the probability of covering with both
    separate intervals while accepting; the latter is a 1-D integral of a
    piecewise-smooth integrand, split at its kinks and integrated piece by
    piece with adaptive Gauss-Kronrod quadrature.

    Raises QuadratureError (carrying the achieved error estimate) if any
    piece fails to converge within ``quad.max_subdivisions``.
    """
    _check_levels(alpha, beta)
    if quad is None:
        quad = QuadratureSpec()
    c_tilde = two_sided_quantile(1.0 - math.sqrt(1.0 - alpha))
    slope, half_width, offset = _moving_interval_geometry(params, beta)

    def integrand(z: float) -> float:
        return _band_mass(z, slope, half_width, offset, c_tilde) \
            * math.exp(-0.5 * z * z) / _SQRT_2PI

    edges = [-c_tilde] + _kink_points(slope, half_width, offset, c_tilde) + [c_tilde]
    pieces = len(edges) - 1
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        # full_output suppresses the IntegrationWarning and appends an
        # explanation to the result tuple when QUADPACK gives up.
        result = integrate.quad(
            integrand, lo, hi,
            epsabs=quad.abs_tol / pieces,
            epsrel=quad.rel_tol,
            limit=quad.max_subdivisions,
            full_output=True,
        )
        if len(result) > 3:
            raise QuadratureError(
                f"integral over [{lo:.6g}, {hi:.6g}] did not converge: {result[3]}",
                error_estimate=float(result[1]),
            )
        total += result[0]
    return (1.0 - alpha) - total


def coverage_from_params(params: AsymptoticParams, alpha: float, beta: float,
                         quad: QuadratureSpec | None = None) -> float:
    """Total large-sample simultaneous coverage of the two-stage intervals."""
    return accept_branch_prob(params, alpha, beta) \
        + reject_branch_prob(params, alpha, beta, quad)


def asymptotic_coverage(design: StudyDesign, p: CellProbs, alpha: float,
                        beta: float, quad: QuadratureSpec | None = None) -> float:
    """Large-sample two-stage coverage at parameter point ``p``."""
    return coverage_from_params(asymptotic_params(design, p), alpha, beta, quad)


def no_pretest_coverage(design: StudyDesign, p: CellProbs, alpha: float) -> float:
    """Large-sample coverage of the always-separate intervals.

    Identically 1 - alpha: each separate interval covers with probability
    sqrt(1 - alpha) exactly under the normal model, independently across
    strata.  The design and parameter point are validated but cannot change
    the value.
    """
    if not 0.0 < alpha < 1.0:
        raise InputDomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    asymptotic_params(design, p)
    return 1.0 - alpha


def _grid_chunk(design: StudyDesign, grid: np.ndarray, flats: Sequence[int],
                alpha: float, beta: float, quad: QuadratureSpec
                ) -> list[tuple[int, float, str]]:
    out = []
    for flat in flats:
        p = _flat_to_probs(int(flat), grid)
        try:
            out.append((int(flat), asymptotic_coverage(design, p, alpha, beta, quad), ""))
        except QuadratureError as exc:
            out.append((int(flat), math.nan, str(exc)))
    return out


def asymptotic_grid_min(design: StudyDesign, alpha: float, beta: float,
                        epsilon: float = 0.02, h: float = 0.096,
                        quad: QuadratureSpec | None = None,
                        workers: int = 1, tie_tol: float = 1e-9) -> GridMinResult:
    """Minimize the large-sample coverage over the grid (eps, eps+h, ..., 1-eps)^4.

    Every grid point is evaluated exactly (to quadrature tolerance); the
    result reports all points within ``tie_tol`` of the minimum.  Points
    whose quadrature fails are recorded and skipped rather than aborting
    the search.
    """
    if quad is None:
        quad = QuadratureSpec()
    grid = probability_grid(epsilon, h)
    flats = np.arange(len(grid) ** 4)
    if workers <= 1:
        results = _grid_chunk(design, grid, flats, alpha, beta, quad)
    else:
        chunks = [c for c in np.array_split(flats, workers * 4) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(
                _grid_chunk,
                *zip(*((design, grid, chunk, alpha, beta, quad) for chunk in chunks)),
            )
            results = [r for part in parts for r in part]
    results.sort(key=lambda r: r[0])

    failures = tuple((_flat_to_probs(flat, grid), msg)
                     for flat, value, msg in results if math.isnan(value))
    finite = [(flat, value) for flat, value, _ in results if not math.isnan(value)]
    if not finite:
        raise QuadratureError("every grid point failed quadrature", math.nan)
    minimum = min(value for _, value in finite)
    argmins = tuple(_flat_to_probs(flat, grid)
                    for flat, value in finite if value - minimum <= tie_tol)
    return GridMinResult(min_coverage=minimum, argmins=argmins,
                         tie_tol=tie_tol, failures=failures)
