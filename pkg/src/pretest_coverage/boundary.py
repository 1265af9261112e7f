"""Coverage away from the parameter-space boundary.

The two-stage coverage is lowest on the boundary of [eps, 1-eps]^4, but it
is also badly low deep inside.  This module probes the interior with a
one-parameter family of perturbations: starting from (p1, p1') it moves
stratum 2 to ``p2 = p1 + delta`` and ``p2' = p1' - r*delta`` with
``|delta| <= Delta``, where

    Delta = sqrt(1/n1 + 1/n2),
    r     = (1/n1' + 1/n2') / (1/n1 + 1/n2).

Restricting (p1, p1') to the shrunken box keeps every perturbed point
inside [eps, 1-eps]^4.  Over that delta range the noncentrality of the
pretest statistic sweeps (at least) [-2, 2], which is exactly the regime
where the pretest does its damage; ``partial_min_coverage`` minimizes the
large-sample coverage over the sweep and ``contour_grid`` maps the
partially-minimized coverage over the whole admissible rectangle.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .asymptotic import QuadratureSpec, asymptotic_coverage
from .errors import InputDomainError
from .model import CellProbs, Interval, StudyDesign

__all__ = [
    "ScanGeometry",
    "ContourGrid",
    "ScalingPoint",
    "scan_geometry",
    "partial_min_coverage",
    "contour_grid",
    "lambda_taylor",
    "scaling_study",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScanGeometry:
    """Perturbation size, control/case precision ratio and admissible ranges."""

    delta_cap: float
    r: float
    delta_cap_prime: float
    p1_range: Interval
    p1p_range: Interval


@dataclass(frozen=True, eq=False)
class ContourGrid:
    """Partially-minimized coverage over a (p1, p1') rectangle.

    ``values[i, j]`` is the delta-minimized coverage at
    (p1_values[i], p1p_values[j]); ``argmin_delta[i, j]`` the minimizing
    delta.
    """

    p1_values: np.ndarray
    p1p_values: np.ndarray
    values: np.ndarray
    argmin_delta: np.ndarray

    def rows(self) -> Iterator[tuple[float, float, float, float]]:
        """Row-major (p1, p1p, min_coverage, argmin_delta) records."""
        for i, p1 in enumerate(self.p1_values):
            for j, p1p in enumerate(self.p1p_values):
                yield (float(p1), float(p1p),
                       float(self.values[i, j]), float(self.argmin_delta[i, j]))


@dataclass(frozen=True)
class ScalingPoint:
    """Partial-minimization result at one sample-size multiple; ``coverage``
    is None when the base point fell outside that design's admissible range."""

    scale: int
    coverage: float | None
    argmin_delta: float | None
    note: str | None = None


def scan_geometry(design: StudyDesign, epsilon: float) -> ScanGeometry:
    """Perturbation geometry for ``design`` inside the [eps, 1-eps] box.

    Raises InputDomainError (naming the violated inequality) when the
    admissible (p1, p1') rectangle would be empty.
    """
    if not 0.0 < epsilon < 0.5:
        raise InputDomainError(f"epsilon must lie in (0, 0.5), got {epsilon!r}")
    delta_cap = math.sqrt(1.0 / design.n1 + 1.0 / design.n2)
    r = (1.0 / design.n1p + 1.0 / design.n2p) / (1.0 / design.n1 + 1.0 / design.n2)
    delta_cap_prime = r * delta_cap
    if epsilon + delta_cap >= 0.5:
        raise InputDomainError(
            f"empty scan range: epsilon + Delta = {epsilon + delta_cap:.6f} >= 1/2")
    if epsilon + delta_cap_prime >= 0.5:
        raise InputDomainError(
            f"empty scan range: epsilon + Delta' = {epsilon + delta_cap_prime:.6f} >= 1/2")
    return ScanGeometry(
        delta_cap=delta_cap,
        r=r,
        delta_cap_prime=delta_cap_prime,
        p1_range=Interval(epsilon + delta_cap, 1.0 - epsilon - delta_cap),
        p1p_range=Interval(epsilon + delta_cap_prime, 1.0 - epsilon - delta_cap_prime),
    )


def partial_min_coverage(design: StudyDesign, p1: float, p1p: float,
                         epsilon: float, alpha: float, beta: float,
                         delta_steps: int = 80,
                         quad: QuadratureSpec | None = None
                         ) -> tuple[float, float]:
    """Minimum large-sample coverage over the delta sweep at (p1, p1').

    Evaluates the two-stage coverage at ``p2 = p1 + delta``,
    ``p2' = p1' - r*delta`` for ``delta_steps + 1`` evenly spaced deltas in
    [-Delta, Delta] (endpoints included) and returns (minimum, its delta).
    (p1, p1') must lie in the geometry's admissible rectangle, which
    guarantees every swept point stays inside [eps, 1-eps]^4.
    """
    if delta_steps < 1:
        raise InputDomainError(f"delta_steps must be >= 1, got {delta_steps}")
    geom = scan_geometry(design, epsilon)
    if not geom.p1_range.contains(p1):
        raise InputDomainError(
            f"p1={p1!r} outside admissible range [{geom.p1_range.lo:.6f}, "
            f"{geom.p1_range.hi:.6f}]")
    if not geom.p1p_range.contains(p1p):
        raise InputDomainError(
            f"p1p={p1p!r} outside admissible range [{geom.p1p_range.lo:.6f}, "
            f"{geom.p1p_range.hi:.6f}]")
    best = math.inf
    best_delta = 0.0
    for delta in np.linspace(-geom.delta_cap, geom.delta_cap, delta_steps + 1):
        point = CellProbs(p1, p1p, p1 + delta, p1p - geom.r * delta)
        value = asymptotic_coverage(design, point, alpha, beta, quad)
        if value < best:
            best = value
            best_delta = float(delta)
    return best, best_delta


def _contour_row(design: StudyDesign, p1: float, p1p_values: Sequence[float],
                 epsilon: float, alpha: float, beta: float, delta_steps: int,
                 quad: QuadratureSpec | None) -> list[tuple[float, float]]:
    return [partial_min_coverage(design, p1, p1p, epsilon, alpha, beta,
                                 delta_steps, quad)
            for p1p in p1p_values]


def contour_grid(design: StudyDesign, epsilon: float, alpha: float, beta: float,
                 grid_steps: int = 32, delta_steps: int = 80,
                 quad: QuadratureSpec | None = None,
                 workers: int = 1) -> ContourGrid:
    """Partially-minimized coverage over the admissible (p1, p1') rectangle.

    ``grid_steps`` is the number of intervals per axis, so the grid has
    (grid_steps + 1)^2 cells including both endpoints.
    """
    if grid_steps < 1:
        raise InputDomainError(f"grid_steps must be >= 1, got {grid_steps}")
    geom = scan_geometry(design, epsilon)
    p1_values = np.linspace(geom.p1_range.lo, geom.p1_range.hi, grid_steps + 1)
    p1p_values = np.linspace(geom.p1p_range.lo, geom.p1p_range.hi, grid_steps + 1)
    args = ((design, float(p1), tuple(map(float, p1p_values)), epsilon, alpha,
             beta, delta_steps, quad) for p1 in p1_values)
    if workers <= 1:
        rows = [_contour_row(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_contour_row, *zip(*args)))
    values = np.array([[v for v, _ in row] for row in rows])
    argmin_delta = np.array([[d for _, d in row] for row in rows])
    return ContourGrid(p1_values=p1_values, p1p_values=p1p_values,
                       values=values, argmin_delta=argmin_delta)


def lambda_taylor(design: StudyDesign, p1: float, p1p: float, delta: float) -> float:
    """First-order approximation to the pretest noncentrality along the sweep.

    Taylor-expanding theta_2 - theta_1 at (p1, p1') with delta' = -r*delta
    gives

        lambda ~= -delta * sqrt(u + r*v) / Delta,

    with u = 1/(p1(1-p1)) and v = 1/(p1'(1-p1')).  Since u, v >= 4 and the
    variance in the denominator splits the same way, |lambda| >= 2|delta|/Delta
    for every (p1, p1'), so the sweep delta in [-Delta, Delta] pushes the
    approximate noncentrality across all of [-2, 2].
    """
    for name, value in (("p1", p1), ("p1p", p1p)):
        if not 0.0 < value < 1.0:
            raise InputDomainError(f"{name} must lie strictly in (0, 1), got {value!r}")
    delta_cap = math.sqrt(1.0 / design.n1 + 1.0 / design.n2)
    r = (1.0 / design.n1p + 1.0 / design.n2p) / (1.0 / design.n1 + 1.0 / design.n2)
    u = 1.0 / (p1 * (1.0 - p1))
    v = 1.0 / (p1p * (1.0 - p1p))
    return -delta * math.sqrt(u + r * v) / delta_cap


def scaling_study(design: StudyDesign, n_values: Sequence[int], p1: float,
                  p1p: float, epsilon: float, alpha: float, beta: float,
                  delta_steps: int = 80, quad: QuadratureSpec | None = None
                  ) -> tuple[ScalingPoint, ...]:
    """Partial-minimized coverage at (p1, p1') for scaled designs N * design.

    Delta shrinks like 1/sqrt(N) while r stays fixed, so the admissible
    rectangle grows with N; any N whose rectangle does not contain
    (p1, p1') is skipped with a notice instead of failing the study.
    """
    points: list[ScalingPoint] = []
    for n in n_values:
        scaled = design.scaled(n)
        try:
            value, delta = partial_min_coverage(
                scaled, p1, p1p, epsilon, alpha, beta, delta_steps, quad)
        except InputDomainError as exc:
            logger.warning("scale %d skipped: %s", n, exc)
            points.append(ScalingPoint(scale=n, coverage=None,
                                       argmin_delta=None, note=str(exc)))
            continue
        points.append(ScalingPoint(scale=n, coverage=value, argmin_delta=delta))
    return tuple(points)
