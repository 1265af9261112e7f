"""Independent oracles used to pin expected values.

Everything here deliberately avoids the library's own code paths:
quantiles come from bisection on mpmath's erf, the worked two-stage
example is a direct transcription of the defining formulas, and the
normal-model simulation below estimates the large-sample coverage by
simulating the procedure instead of integrating it.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

mpmath.mp.dps = 40


def normal_cdf(x) -> mpmath.mpf:
    return (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2))) / 2


def two_sided_quantile_bisect(level: float, tol: float = 1e-24) -> float:
    """c with P(-c <= Z <= c) = 1 - level, by bisection on the erf series."""
    target = 1 - mpmath.mpf(level) / 2  # Phi(c) = 1 - level/2
    lo, hi = mpmath.mpf(0), mpmath.mpf(20)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if normal_cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


def two_stage_by_hand(design, tables, alpha, beta):
    """Step-by-step recomputation of the two-stage interval selection.

    Returns ((lo1, hi1), (lo2, hi2), rejected) computed directly from the
    defining formulas with oracle quantiles.
    """
    n1, n1p, n2, n2p = design
    y1, y1p, y2, y2p = tables
    ph1 = (y1 + 0.5) / (n1 + 1)
    ph1p = (y1p + 0.5) / (n1p + 1)
    ph2 = (y2 + 0.5) / (n2 + 1)
    ph2p = (y2p + 0.5) / (n2p + 1)
    th1 = math.log(ph1 * (1 - ph1p) / ((1 - ph1) * ph1p))
    th2 = math.log(ph2 * (1 - ph2p) / ((1 - ph2) * ph2p))
    v1 = (1 / ph1 + 1 / (1 - ph1)) / n1 + (1 / ph1p + 1 / (1 - ph1p)) / n1p
    v2 = (1 / ph2 + 1 / (1 - ph2)) / n2 + (1 / ph2p + 1 / (1 - ph2p)) / n2p
    t_hat = (th1 - th2) / math.sqrt(v1 + v2)
    c_alpha = two_sided_quantile_bisect(alpha)
    c_tilde = two_sided_quantile_bisect(1 - math.sqrt(1 - alpha))
    c_beta = two_sided_quantile_bisect(beta)
    if abs(t_hat) > c_beta:
        return (
            (th1 - c_tilde * math.sqrt(v1), th1 + c_tilde * math.sqrt(v1)),
            (th2 - c_tilde * math.sqrt(v2), th2 + c_tilde * math.sqrt(v2)),
            True,
        )
    pooled = (th1 / v1 + th2 / v2) / (1 / v1 + 1 / v2)
    half = c_alpha / math.sqrt(1 / v1 + 1 / v2)
    return ((pooled - half, pooled + half), (pooled - half, pooled + half), False)


def normal_model_mc(theta1, theta2, sigma_sq1, sigma_sq2, alpha, beta,
                    reps, seed) -> tuple[float, float]:
    """Simulate the two-stage procedure under the known-variance normal model.

    Draws the two estimators directly from their normal laws, applies the
    pretest and the branch rule, and returns (coverage, standard error).
    """
    c_alpha = two_sided_quantile_bisect(alpha)
    c_tilde = two_sided_quantile_bisect(1 - math.sqrt(1 - alpha))
    c_beta = math.inf if beta == 0 else two_sided_quantile_bisect(beta)
    s1 = math.sqrt(sigma_sq1)
    s2 = math.sqrt(sigma_sq2)
    w = 1 / (1 / sigma_sq1 + 1 / sigma_sq2)
    half_pooled = c_alpha * math.sqrt(w)
    rng = np.random.default_rng(seed)
    covered = 0
    remaining = reps
    while remaining > 0:
        block = min(remaining, 2_000_000)
        t1 = rng.normal(theta1, s1, block)
        t2 = rng.normal(theta2, s2, block)
        reject = np.abs((t1 - t2) / math.sqrt(sigma_sq1 + sigma_sq2)) > c_beta
        pooled = (t1 / sigma_sq1 + t2 / sigma_sq2) * w
        pooled_ok = (np.abs(pooled - theta1) <= half_pooled) \
            & (np.abs(pooled - theta2) <= half_pooled)
        separate_ok = (np.abs(t1 - theta1) <= c_tilde * s1) \
            & (np.abs(t2 - theta2) <= c_tilde * s2)
        covered += int(np.count_nonzero(np.where(reject, separate_ok, pooled_ok)))
        remaining -= block
    coverage = covered / reps
    return coverage, math.sqrt(coverage * (1 - coverage) / reps)
