import math

import numpy as np
import pytest
from scipy import special

from deconfound import (
    DataError,
    ParameterError,
    data_driven_threshold,
    evaluate,
    gaussian_tail,
)
from deconfound.multiple_testing import TestDecision as Decision
from deconfound.multiple_testing import fallback_threshold, search_upper_bound


def grid_scan_threshold(stats, alpha, n_grid=100_000):
    """Brute-force oracle: uniform grid over the search interval with the
    same fallback rule.

    The grid spans [0, max(sqrt(2 log p), t_p)]: for p below e^e the
    search bound t_p exceeds sqrt(2 log p), so the grid is stretched to
    keep covering the whole interval the procedure scans."""
    stats = np.asarray(stats, dtype=float)
    p = stats.size
    abs_sorted = np.sort(np.abs(stats))
    hi = math.sqrt(2.0 * math.log(p)) if p > 1 else 0.0
    if p == 1:
        t_p = 0.0
    else:
        t_p = math.sqrt(2.0 * math.log(p) - 2.0 * math.log(math.log(p)))
    grid = np.linspace(0.0, max(hi, t_p), n_grid)
    tail = special.erfc(grid / math.sqrt(2.0))
    counts = p - np.searchsorted(abs_sorted, grid, side="left")
    crit = p * tail / np.maximum(counts, 1)
    ok = (crit <= alpha) & (grid <= t_p)
    if np.any(ok):
        return float(grid[int(np.argmax(ok))]), False
    return float(math.sqrt(2.0 * math.log(p))), True


def grid_step(p, n_grid=100_000):
    """Spacing of the oracle grid for a problem of size p."""
    if p == 1:
        return 0.0
    hi = math.sqrt(2.0 * math.log(p))
    t_p = math.sqrt(2.0 * math.log(p) - 2.0 * math.log(math.log(p)))
    return max(hi, t_p) / (n_grid - 1)


class TestGaussianTail:
    def test_at_zero(self):
        assert gaussian_tail(0.0) == 1.0

    def test_at_1_96(self):
        assert abs(gaussian_tail(1.96) - 0.05) <= 2e-4

    def test_monotone_decreasing(self):
        ts = np.linspace(0, 6, 200)
        vals = gaussian_tail(ts)
        assert np.all(np.diff(vals) < 0)

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            gaussian_tail(-0.1)


class TestDataDrivenThreshold:
    def test_all_zero_statistics_fall_back(self):
        # p = 10, alpha = 0.1: the criterion would need t >= 2.576 but the
        # search stops at t_p ~ 1.77, so the conservative fallback applies
        dec = data_driven_threshold(np.zeros(10), 0.1)
        assert dec.fallback_used
        assert dec.t_hat == pytest.approx(math.sqrt(2 * math.log(10)))
        assert dec.rejected.size == 0

    def test_three_large_one_small(self):
        stats = np.array([10.0, 10.0, 10.0, 0.1])
        dec = data_driven_threshold(stats, 0.1)
        assert dec.fallback_used
        assert dec.t_hat == pytest.approx(math.sqrt(2 * math.log(4)))
        assert dec.rejected.size == 3
        ora_t, ora_fb = grid_scan_threshold(stats, 0.1)
        assert ora_fb and abs(dec.t_hat - ora_t) < 1e-9

    def test_single_statistic(self):
        for value in (12.0, 0.5, 0.0):
            stats = np.array([value])
            dec = data_driven_threshold(stats, 0.05)
            ora_t, ora_fb = grid_scan_threshold(stats, 0.05)
            assert dec.fallback_used == ora_fb
            assert abs(dec.t_hat - ora_t) <= 1e-9
            assert dec.rejected.size == 1  # fallback threshold is 0 at p = 1

    def test_threshold_attains_level(self):
        rng = np.random.default_rng(90)
        stats = np.concatenate([rng.standard_normal(400), [8.0] * 30])
        dec = data_driven_threshold(stats, 0.1)
        assert not dec.fallback_used
        assert dec.estimated_fdp <= 0.1
        assert dec.t_hat <= search_upper_bound(stats.size)

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(91)
        for _ in range(200):
            p = int(rng.integers(1, 501))
            stats = rng.standard_normal(p)
            n_sig = int(rng.integers(0, min(20, p) + 1))
            if n_sig:
                idx = rng.choice(p, n_sig, replace=False)
                stats[idx] += rng.choice([-1, 1], n_sig) * rng.uniform(2, 8, n_sig)
            alpha = float(rng.uniform(0.02, 0.3))
            dec = data_driven_threshold(stats, alpha)
            grid_t, grid_fb = grid_scan_threshold(stats, alpha)
            step = grid_step(p)
            assert dec.fallback_used == grid_fb
            assert abs(dec.t_hat - grid_t) <= step + 1e-12
            grid_set = np.nonzero(np.abs(stats) >= grid_t)[0]
            np.testing.assert_array_equal(dec.rejected, grid_set)

    def test_alpha_monotonicity(self):
        rng = np.random.default_rng(92)
        stats = np.concatenate([rng.standard_normal(300), [6.0] * 12])
        sizes = [
            data_driven_threshold(stats, a).rejected.size
            for a in (0.02, 0.05, 0.1, 0.2, 0.4)
        ]
        assert sizes == sorted(sizes)

    def test_signed_sets_partition_rejections(self):
        rng = np.random.default_rng(93)
        stats = np.concatenate([rng.standard_normal(100), [5.0, -5.0, 7.0]])
        dec = data_driven_threshold(stats, 0.2)
        assert dec.rejected.size > 0
        merged = np.sort(
            np.concatenate([dec.rejected_positive, dec.rejected_negative])
        )
        np.testing.assert_array_equal(merged, np.sort(dec.rejected))
        assert not set(dec.rejected_positive) & set(dec.rejected_negative)

    def test_rejection_rule_is_at_threshold(self):
        stats = np.array([3.0, 2.0, 1.0, 4.0])
        dec = data_driven_threshold(stats, 0.1)
        expected = np.nonzero(np.abs(stats) >= dec.t_hat)[0]
        np.testing.assert_array_equal(dec.rejected, expected)

    def test_input_validation(self):
        with pytest.raises(DataError):
            data_driven_threshold(np.array([1.0, np.inf]), 0.1)
        with pytest.raises(ParameterError):
            data_driven_threshold(np.array([1.0]), 0.0)
        with pytest.raises(ParameterError):
            data_driven_threshold(np.array([1.0]), 1.0)
        with pytest.raises(ParameterError):
            data_driven_threshold(np.array([]), 0.1)


class TestSearchBounds:
    def test_upper_bound_formula(self):
        assert search_upper_bound(10) == pytest.approx(
            math.sqrt(2 * math.log(10) - 2 * math.log(math.log(10)))
        )
        assert search_upper_bound(1) == 0.0

    def test_fallback_formula(self):
        assert fallback_threshold(4) == pytest.approx(math.sqrt(2 * math.log(4)))
        assert fallback_threshold(1) == 0.0


def make_decision(stats, alpha=0.1):
    return data_driven_threshold(np.asarray(stats, dtype=float), alpha)


class TestEvaluate:
    def test_empty_rejection_set(self):
        dec = make_decision(np.zeros(10))
        metrics = evaluate(dec, np.zeros(10))
        assert metrics.fdp == 0.0 and metrics.power == 0.0

    def test_perfect_recovery(self):
        stats = np.zeros(20)
        stats[[3, 7]] = [8.0, -8.0]
        beta = np.zeros(20)
        beta[[3, 7]] = [1.0, -1.0]
        dec = make_decision(stats)
        metrics = evaluate(dec, beta)
        assert set(dec.rejected.tolist()) == {3, 7}
        assert metrics.fdp == 0.0 and metrics.power == 1.0
        assert metrics.sign_errors == 0

    def test_half_false(self):
        dec = Decision(
            alpha=0.1, t_hat=2.0, fallback_used=False,
            rejected=np.array([0, 1]),
            rejected_positive=np.array([0, 1]),
            rejected_negative=np.array([], dtype=int),
            estimated_fdp=0.05, n_tests=5,
        )
        beta = np.zeros(5)
        beta[1] = 1.0
        metrics = evaluate(dec, beta)
        assert metrics.fdp == 0.5 and metrics.power == 1.0
        assert metrics.false_positives == 1 and metrics.true_positives == 1

    def test_sign_errors_counted(self):
        dec = Decision(
            alpha=0.1, t_hat=2.0, fallback_used=False,
            rejected=np.array([0, 1]),
            rejected_positive=np.array([0]),
            rejected_negative=np.array([1]),
            estimated_fdp=0.0, n_tests=3,
        )
        beta = np.array([-1.0, -1.0, 0.0])  # statistic 0 has the wrong sign
        metrics = evaluate(dec, beta)
        assert metrics.sign_errors == 1

    def test_shape_mismatch(self):
        dec = make_decision(np.zeros(4))
        with pytest.raises(ParameterError):
            evaluate(dec, np.zeros(5))
