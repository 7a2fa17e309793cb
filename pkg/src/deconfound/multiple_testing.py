"""Data-driven threshold selection and error metrics for simultaneous testing.

Given standardized statistics T_1..T_p, the threshold is the smallest
t in [0, t_p] at which the estimated false discovery proportion
p * G(t) / (R(t) v 1) drops to the target level, where G is the two-sided
standard Gaussian tail, R(t) counts |T_j| >= t, and
t_p = sqrt(2 log p - 2 log log p). If no such t exists the conservative
fallback sqrt(2 log p) is used.

The search is exact, not gridded: between consecutive values of |T_j| the
count R is constant and G is continuous and decreasing, so within each
piece the criterion boundary solves G(t) = alpha (R v 1) / p in closed
form via the inverse Gaussian tail. The procedure depends only on the
statistics vector and the level; no model objects enter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DataError, ParameterError


def gaussian_tail(t):
    """Two-sided standard Gaussian tail G(t) = 2 (1 - Phi(t)) = erfc(t / sqrt(2)).

    Accepts a scalar or array; t must be >= 0.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ParameterError("gaussian_tail is defined for t >= 0")
    out = special.erfc(arr / np.sqrt(2.0))
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def gaussian_tail_inverse(c: float) -> float:
    """Smallest t >= 0 with G(t) <= c. Returns 0 when c >= 1."""
    if c >= 1.0:
        return 0.0
    if c <= 0.0:
        return np.inf
    return float(np.sqrt(2.0) * special.erfcinv(c))


def search_upper_bound(p: int) -> float:
    """Upper end t_p = sqrt(2 log p - 2 log log p) of the threshold search.

    Defined for p >= 2; for a single hypothesis the search interval
    degenerates to {0}.
    """
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if p == 1:
        return 0.0
    lp = np.log(p)
    return float(np.sqrt(2.0 * lp - 2.0 * np.log(lp)))


def fallback_threshold(p: int) -> float:
    """Conservative threshold sqrt(2 log p) used when no search point qualifies."""
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    return float(np.sqrt(2.0 * np.log(p)))


@dataclass(frozen=True)
class TestDecision:
    """Outcome of the thresholding procedure on one statistics vector."""

    alpha: float
    t_hat: float
    fallback_used: bool
    rejected: np.ndarray
    rejected_positive: np.ndarray
    rejected_negative: np.ndarray
    estimated_fdp: float
    n_tests: int


@dataclass(frozen=True)
class EvalMetrics:
    """Realized error and power of a decision against known truth."""

    fdp: float
    power: float
    true_positives: int
    false_positives: int
    sign_errors: int


def data_driven_threshold(statistics: np.ndarray, alpha: float) -> TestDecision:
    """Select the rejection threshold and build the signed rejection sets.

    Parameters
    ----------
    statistics : ndarray, shape (p,)
        Standardized test statistics; must be finite.
    alpha : float
        Target false discovery level in (0, 1).

    Returns
    -------
    TestDecision
        Coordinates with |T_j| >= t_hat are rejected and split by the
        sign of T_j. ``estimated_fdp`` is p G(t_hat) / (R(t_hat) v 1)
        at the selected threshold.

    Raises
    ------
    DataError
        If any statistic is non-finite.
    ParameterError
        If alpha is outside (0, 1) or the vector is empty.
    """
    stats = np.atleast_1d(np.asarray(statistics, dtype=float))
    if stats.ndim != 1 or stats.size < 1:
        raise ParameterError("statistics must be a non-empty 1-d vector")
    if not np.all(np.isfinite(stats)):
        raise DataError("statistics contain non-finite values")
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha={alpha} must lie in (0, 1)")

    p = stats.size
    abs_t = np.abs(stats)
    sorted_abs = np.sort(abs_t)
    t_p = search_upper_bound(p)

    def count_ge(t):
        return p - int(np.searchsorted(sorted_abs, t, side="left"))

    inner = np.unique(abs_t)
    inner = inner[(inner > 0.0) & (inner < t_p)]
    edges = np.concatenate(([0.0], inner, [t_p]))

    t_hat = None
    for a, b in zip(edges[:-1], edges[1:]):
        if not b > a:
            continue
        # R is constant on (a, b] and equals the count of |T_j| > a.
        r = p - int(np.searchsorted(sorted_abs, a, side="right"))
        level = alpha * max(r, 1) / p
        t_star = gaussian_tail_inverse(level)
        if t_star > b:
            continue
        t_star = max(t_star, a)
        # erfcinv round-off can leave the criterion above alpha by an ulp.
        while p * gaussian_tail(t_star) / max(count_ge(t_star), 1) > alpha:
            t_star = np.nextafter(t_star, np.inf)
        if t_star <= b:
            t_hat = float(t_star)
            break
    fallback = t_hat is None
    if fallback:
        t_hat = fallback_threshold(p)

    rejected = np.nonzero(abs_t >= t_hat)[0]
    estimated = p * gaussian_tail(t_hat) / max(rejected.size, 1)
    return TestDecision(
        alpha=float(alpha),
        t_hat=t_hat,
        fallback_used=fallback,
        rejected=rejected,
        rejected_positive=rejected[stats[rejected] > 0],
        rejected_negative=rejected[stats[rejected] < 0],
        estimated_fdp=float(estimated),
        n_tests=p,
    )


def evaluate(decision: TestDecision, true_beta: np.ndarray) -> EvalMetrics:
    """Score a decision against the true coefficient vector.

    ``power`` is the recovered fraction of the true support (0 when the
    support is empty); ``sign_errors`` counts rejected true signals whose
    statistic sign disagrees with the sign of the coefficient.
    """
    beta = np.asarray(true_beta, dtype=float)
    if beta.shape != (decision.n_tests,):
        raise ParameterError(
            f"true_beta has shape {beta.shape}, expected ({decision.n_tests},)"
        )
    support = np.nonzero(beta != 0.0)[0]
    rejected = decision.rejected
    n_rej = rejected.size
    tp = int(np.isin(rejected, support).sum())
    fp = n_rej - tp
    fdp = fp / max(n_rej, 1)
    power = tp / support.size if support.size > 0 else 0.0

    sign_errors = 0
    pos = set(decision.rejected_positive.tolist())
    neg = set(decision.rejected_negative.tolist())
    for j in rejected.tolist():
        if beta[j] == 0.0:
            continue
        decided = 1 if j in pos else (-1 if j in neg else 0)
        if decided != (1 if beta[j] > 0 else -1):
            sign_errors += 1
    return EvalMetrics(
        fdp=float(fdp),
        power=float(power),
        true_positives=tp,
        false_positives=fp,
        sign_errors=sign_errors,
    )
