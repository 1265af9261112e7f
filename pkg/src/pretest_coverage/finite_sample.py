"""Finite-sample simultaneous coverage under the binomial model.

Three routes to the same quantity P(theta_1 in interval_1 AND theta_2 in
interval_2):

* ``mc_coverage`` — vectorized Monte Carlo with exact binomial sampling;
* ``enumerate_coverage`` — exact summation over the full outcome space
  (budget-capped), the oracle used to validate the Monte Carlo path;
* ``min_coverage_search`` — the staged grid search for the minimum coverage
  over [eps, 1-eps]^4.

Reproducibility contract: every coverage estimate is driven by a
counter-based Philox stream derived from ``(seed, stage, grid-point index)``
via ``SeedSequence`` spawn keys, so serial and parallel runs produce
bit-identical results for the same seed and configuration.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.stats import binom

from .errors import InputDomainError, OutcomeBudgetError
from .model import (
    AnalysisConfig,
    CellProbs,
    StudyDesign,
    normal_quantiles,
)

__all__ = [
    "Mode",
    "McEstimate",
    "StageTrace",
    "SearchResult",
    "probability_grid",
    "mc_coverage",
    "enumerate_coverage",
    "min_coverage_search",
]

Mode = Literal["two_stage", "no_pretest"]

# Reps are simulated in fixed-size blocks so memory stays bounded without
# affecting reproducibility (the block size is part of the algorithm).
_BLOCK = 1_000_000


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo coverage estimate with its binomial standard error."""

    coverage: float
    reps: int
    std_err: float
    seed: int


@dataclass(frozen=True)
class StageTrace:
    """What one search stage did: how many candidates it estimated at which
    rep count, and the survivors (lowest estimates first)."""

    stage: int
    reps: int
    n_candidates: int
    kept: tuple[tuple[CellProbs, float], ...]


@dataclass(frozen=True)
class SearchResult:
    """Outcome of the staged minimum-coverage search."""

    min_coverage: float
    argmin: CellProbs
    stage_trace: tuple[StageTrace, ...]


def probability_grid(epsilon: float, h: float) -> np.ndarray:
    """Grid values eps, eps+h, ... not exceeding 1-eps (one coordinate axis)."""
    if not 0.0 < epsilon < 0.5:
        raise InputDomainError(f"epsilon must lie in (0, 0.5), got {epsilon!r}")
    if not h > 0.0:
        raise InputDomainError(f"h must be > 0, got {h!r}")
    count = int(math.floor((1.0 - 2.0 * epsilon) / h + 1e-9)) + 1
    return epsilon + h * np.arange(count)


def _validate_mode(mode: str) -> None:
    if mode not in ("two_stage", "no_pretest"):
        raise InputDomainError(f"mode must be 'two_stage' or 'no_pretest', got {mode!r}")


def _stream(seed: int, key: tuple[int, ...] = ()) -> np.random.Generator:
    """Counter-based generator for one work item, split off the global seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _covered_count(design: StudyDesign, p: CellProbs, mode: str,
                   crits: tuple[float, float, float],
                   rng: np.random.Generator, reps: int) -> int:
    """Number of simulated studies whose selected intervals cover both thetas.

    Coverage checks are closed (endpoints count).
    """
    c_alpha, c_tilde_alpha, c_beta = crits
    n1, n1p, n2, n2p = design.as_tuple()
    theta1, theta2 = p.theta1, p.theta2
    covered = 0
    remaining = reps
    while remaining > 0:
        block = min(remaining, _BLOCK)
        y1 = rng.binomial(n1, p.p1, block)
        y1p = rng.binomial(n1p, p.p1p, block)
        y2 = rng.binomial(n2, p.p2, block)
        y2p = rng.binomial(n2p, p.p2p, block)

        ph1 = (y1 + 0.5) / (n1 + 1.0)
        ph1p = (y1p + 0.5) / (n1p + 1.0)
        ph2 = (y2 + 0.5) / (n2 + 1.0)
        ph2p = (y2p + 0.5) / (n2p + 1.0)

        th1 = np.log(ph1 / (1.0 - ph1)) - np.log(ph1p / (1.0 - ph1p))
        th2 = np.log(ph2 / (1.0 - ph2)) - np.log(ph2p / (1.0 - ph2p))
        v1 = (1.0 / n1) * (1.0 / ph1 + 1.0 / (1.0 - ph1)) \
            + (1.0 / n1p) * (1.0 / ph1p + 1.0 / (1.0 - ph1p))
        v2 = (1.0 / n2) * (1.0 / ph2 + 1.0 / (1.0 - ph2)) \
            + (1.0 / n2p) * (1.0 / ph2p + 1.0 / (1.0 - ph2p))

        separate_ok = (np.abs(th1 - theta1) <= c_tilde_alpha * np.sqrt(v1)) \
            & (np.abs(th2 - theta2) <= c_tilde_alpha * np.sqrt(v2))
        if mode == "no_pretest":
            ok = separate_ok
        else:
            t_hat = (th1 - th2) / np.sqrt(v1 + v2)
            pooled_var = 1.0 / (1.0 / v1 + 1.0 / v2)
            pooled = (th1 / v1 + th2 / v2) * pooled_var
            half = c_alpha * np.sqrt(pooled_var)
            pooled_ok = (np.abs(pooled - theta1) <= half) \
                & (np.abs(pooled - theta2) <= half)
            ok = np.where(np.abs(t_hat) > c_beta, separate_ok, pooled_ok)
        covered += int(np.count_nonzero(ok))
        remaining -= block
    return covered


def mc_coverage(design: StudyDesign, p: CellProbs, config: AnalysisConfig,
                mode: Mode = "two_stage", reps: int = 10_000,
                seed: int | None = None) -> McEstimate:
    """Monte Carlo estimate of the simultaneous coverage probability at ``p``.

    Each rep draws the four binomial counts independently, runs the selected
    analysis (``two_stage`` applies the pretest rule, ``no_pretest`` always
    uses the separate intervals) and checks that both log odds ratios fall
    in their intervals.  Same inputs and seed give a bit-identical estimate.
    """
    _validate_mode(mode)
    if reps < 1:
        raise InputDomainError(f"reps must be >= 1, got {reps}")
    if seed is None:
        seed = config.seed
    crits = normal_quantiles(config.alpha, config.beta)
    covered = _covered_count(design, p, mode, crits, _stream(seed), reps)
    coverage = covered / reps
    std_err = math.sqrt(coverage * (1.0 - coverage) / reps)
    return McEstimate(coverage=coverage, reps=reps, std_err=std_err, seed=seed)


def enumerate_coverage(design: StudyDesign, p: CellProbs, config: AnalysisConfig,
                       mode: Mode = "two_stage", budget: int = 10_000_000,
                       always_covered: bool = False) -> float:
    """Exact simultaneous coverage by summing binomial masses over all outcomes.

    Walks the full outcome space {0..n1} x {0..n1'} x {0..n2} x {0..n2'},
    evaluates the interval-selection rule at every outcome and adds up the
    four-fold products of binomial point masses over the covering outcomes.
    Masses come from log-pmfs and the total is accumulated with compensated
    summation, so the result is accurate even with ~10^7 terms of wildly
    varying magnitude.

    ``always_covered`` replaces the coverage event with "true" and must
    return exactly 1.0; it exists as a normalization diagnostic.

    Raises OutcomeBudgetError when the outcome space exceeds ``budget``.
    """
    _validate_mode(mode)
    outcomes = design.outcome_count()
    if outcomes > budget:
        raise OutcomeBudgetError(outcomes, budget)

    c_alpha, c_tilde_alpha, c_beta = normal_quantiles(config.alpha, config.beta)
    n1, n1p, n2, n2p = design.as_tuple()
    theta1, theta2 = p.theta1, p.theta2

    def margin(n: int, prob: float) -> np.ndarray:
        return binom.logpmf(np.arange(n + 1), n, prob)

    lp1, lp1p = margin(n1, p.p1), margin(n1p, p.p1p)
    lp2, lp2p = margin(n2, p.p2), margin(n2p, p.p2p)

    def stats(n: int, n_prime: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ph = (np.arange(n + 1) + 0.5) / (n + 1.0)
        php = (np.arange(n_prime + 1) + 0.5) / (n_prime + 1.0)
        th = np.log(ph / (1.0 - ph))[:, None] - np.log(php / (1.0 - php))[None, :]
        var = ((1.0 / n) * (1.0 / ph + 1.0 / (1.0 - ph)))[:, None] \
            + ((1.0 / n_prime) * (1.0 / php + 1.0 / (1.0 - php)))[None, :]
        return th, var, ph, php

    th1_grid, v1_grid, _, _ = stats(n1, n1p)
    th2_grid, v2_grid, _, _ = stats(n2, n2p)
    lp2_grid = lp2[:, None] + lp2p[None, :]
    sep2 = np.abs(th2_grid - theta2) <= c_tilde_alpha * np.sqrt(v2_grid)

    partials: list[float] = []
    for i in range(n1 + 1):
        for j in range(n1p + 1):
            th1 = th1_grid[i, j]
            v1 = v1_grid[i, j]
            if always_covered:
                ok = np.ones_like(sep2)
            else:
                sep1 = abs(th1 - theta1) <= c_tilde_alpha * math.sqrt(v1)
                if mode == "no_pretest":
                    ok = sep2 if sep1 else np.zeros_like(sep2)
                else:
                    t_hat = (th1 - th2_grid) / np.sqrt(v1 + v2_grid)
                    pooled_var = 1.0 / (1.0 / v1 + 1.0 / v2_grid)
                    pooled = (th1 / v1 + th2_grid / v2_grid) * pooled_var
                    half = c_alpha * np.sqrt(pooled_var)
                    pooled_ok = (np.abs(pooled - theta1) <= half) \
                        & (np.abs(pooled - theta2) <= half)
                    ok = np.where(np.abs(t_hat) > c_beta, sep2 & sep1, pooled_ok)
            masses = lp2_grid[ok]
            if masses.size:
                partials.append(math.fsum(np.exp(lp1[i] + lp1p[j] + masses).tolist()))
    return math.fsum(partials)


def _flat_to_probs(flat: int, grid: np.ndarray) -> CellProbs:
    size = len(grid)
    i, rest = divmod(flat, size ** 3)
    j, rest = divmod(rest, size ** 2)
    k, l = divmod(rest, size)
    return CellProbs(float(grid[i]), float(grid[j]), float(grid[k]), float(grid[l]))


def _estimate_chunk(design: StudyDesign, grid: np.ndarray, flats: Sequence[int],
                    mode: str, crits: tuple[float, float, float],
                    seed: int, stage: int, reps: int) -> list[float]:
    out = []
    for flat in flats:
        p = _flat_to_probs(int(flat), grid)
        rng = _stream(seed, (stage, int(flat)))
        out.append(_covered_count(design, p, mode, crits, rng, reps) / reps)
    return out


def _parallel_estimates(design: StudyDesign, grid: np.ndarray, flats: np.ndarray,
                        mode: str, crits: tuple[float, float, float],
                        seed: int, stage: int, reps: int, workers: int) -> np.ndarray:
    if workers <= 1 or len(flats) < 2 * workers:
        values = _estimate_chunk(design, grid, flats, mode, crits, seed, stage, reps)
        return np.asarray(values)
    chunks = np.array_split(flats, workers * 4)
    chunks = [c for c in chunks if len(c)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = pool.map(
            _estimate_chunk,
            *zip(*((design, grid, chunk, mode, crits, seed, stage, reps)
                   for chunk in chunks)),
        )
        values = [v for part in results for v in part]
    return np.asarray(values)


def min_coverage_search(design: StudyDesign, config: AnalysisConfig,
                        mode: Mode = "two_stage", workers: int = 1) -> SearchResult:
    """Staged Monte Carlo search for the minimum simultaneous coverage.

    Stage 1 estimates every point of the grid (eps, eps+h, ..., 1-eps)^4
    with the stage's rep count and keeps the ``keep`` lowest estimates;
    later stages re-estimate the survivors with fresh substreams and larger
    rep counts.  Ties are broken by lexicographic grid order.  The returned
    minimum is the final stage's lowest estimate (an upper-bound estimate
    of the true minimum, up to Monte Carlo noise).

    Results are independent of ``workers``; the stream for a grid point
    depends only on (config.seed, stage index, point index).
    """
    _validate_mode(mode)
    grid = probability_grid(config.epsilon, config.h)
    if len(grid) == 0:
        raise InputDomainError("probability grid is empty")
    crits = normal_quantiles(config.alpha, config.beta)

    candidates = np.arange(len(grid) ** 4)
    trace: list[StageTrace] = []
    best_value = math.nan
    best_flat = -1
    for stage_index, stage in enumerate(config.mc_schedule):
        values = _parallel_estimates(design, grid, candidates, mode, crits,
                                     config.seed, stage_index, stage.reps, workers)
        order = np.lexsort((candidates, values))
        keep = order[: stage.keep]
        trace.append(StageTrace(
            stage=stage_index,
            reps=stage.reps,
            n_candidates=len(candidates),
            kept=tuple((_flat_to_probs(int(candidates[i]), grid), float(values[i]))
                       for i in keep),
        ))
        best_value = float(values[keep[0]])
        best_flat = int(candidates[keep[0]])
        candidates = candidates[np.sort(keep)]
    return SearchResult(
        min_coverage=best_value,
        argmin=_flat_to_probs(best_flat, grid),
        stage_trace=tuple(trace),
    )
