import math

import numpy as np
import pytest

from robest import (
    CatoniConfig,
    HuberConfig,
    InvalidArgumentError,
    LepskiConfig,
    MedianConvention,
    NumericFailureError,
    SmoothedMomConfig,
    catoni_estimate,
    catoni_estimate_batch,
    catoni_influence,
    empirical_mean,
    huber_m_estimate,
    lepski_adaptive_mom,
    mom_estimate,
    mom_estimate_batch,
    smoothed_mom_estimate,
    trimmed_mean,
)
from robest.core import block_means, median, partition_blocks
from robest.univariate import huber_clip


def grid_root_bracket(score, lo, hi, points=1_000_000):
    """Independent sign-change scan: smallest bracket containing the root set."""
    grid = np.linspace(lo, hi, points)
    values = score(grid)
    pos = values > 0
    neg = values < 0
    left = grid[pos][-1] if pos.any() else lo  # last strictly positive point
    right = grid[neg][0] if neg.any() else hi  # first strictly negative point
    return left, right


class TestEmpiricalMean:
    def test_examples(self):
        assert empirical_mean([1, 2, 3]) == 2
        assert empirical_mean([4.5] * 7) == 4.5
        assert empirical_mean([-1, 1]) == 0


class TestMom:
    def test_hand_block_means(self):
        assert mom_estimate([1, 2, 3, 4, 5, 6], 3) == 3.5

    def test_outlier_confined_to_one_block(self):
        assert mom_estimate([0, 0, 0, 9, 0, 0], 3) == 0

    def test_single_block_is_mean(self):
        vals = np.random.default_rng(0).normal(size=17)
        assert mom_estimate(vals, 1) == pytest.approx(vals.mean(), abs=1e-14)

    def test_invalid_k(self):
        with pytest.raises(InvalidArgumentError):
            mom_estimate([1, 2, 3], 4)

    def test_breakdown_within_clean_block_mean_range(self):
        # m < ceil(K/2) corruptions in m distinct blocks cannot push the
        # median outside the uncorrupted blocks' mean range.
        rng = np.random.default_rng(3)
        for _ in range(20):
            n, k = 40, 8
            vals = rng.normal(size=n)
            part = partition_blocks(n, k)
            m = rng.integers(1, math.ceil(k / 2))
            corrupted_blocks = rng.choice(k, size=m, replace=False)
            corrupt = vals.copy()
            for b in corrupted_blocks:
                corrupt[part.blocks[b][0]] = rng.normal() * 1e9
            clean_means = [
                block_means(corrupt, part)[j] for j in range(k) if j not in corrupted_blocks
            ]
            est = mom_estimate(corrupt, k)
            assert min(clean_means) <= est <= max(clean_means)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(4)
        mat = rng.normal(size=(10, 23))
        for convention in MedianConvention:
            batch = mom_estimate_batch(mat, 5, convention)
            single = [mom_estimate(row, 5, convention) for row in mat]
            np.testing.assert_allclose(batch, single, atol=1e-14)


class TestCatoni:
    def test_symmetric_pair(self):
        for alpha in (0.1, 1.0, 3.0):
            assert catoni_estimate([-1.0, 1.0], CatoniConfig(alpha)) == pytest.approx(0.0, abs=1e-9)

    def test_constant(self):
        assert catoni_estimate([3.25] * 5, CatoniConfig(0.5)) == 3.25

    def test_grid_scan_oracle(self):
        vals = np.array([0.0, 1.0, 10.0])
        alpha = 0.1

        def score(mu):
            return catoni_influence(alpha * (vals[None, :] - np.atleast_1d(mu)[:, None])).sum(axis=1)

        left, right = grid_root_bracket(score, vals.min() - 2 / alpha, vals.max() + 2 / alpha)
        est = catoni_estimate(vals, CatoniConfig(alpha, tolerance=1e-12))
        assert left - 1e-9 <= est <= right + 1e-9
        assert right - left < 1e-3  # scan actually pinned the root

    def test_random_roots_against_grid_scan(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            vals = rng.normal(size=6) * rng.uniform(0.5, 3.0)
            alpha = rng.uniform(0.05, 2.0)

            def score(mu):
                return catoni_influence(alpha * (vals[None, :] - np.atleast_1d(mu)[:, None])).sum(axis=1)

            left, right = grid_root_bracket(score, vals.min(), vals.max())
            est = catoni_estimate(vals, CatoniConfig(alpha, tolerance=1e-12))
            width = right - left
            assert left - width <= est <= right + width

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(6)
        mat = rng.standard_t(3, size=(8, 40))
        config = CatoniConfig(0.3, tolerance=1e-12)
        batch = catoni_estimate_batch(mat, config)
        single = [catoni_estimate(row, config) for row in mat]
        np.testing.assert_allclose(batch, single, atol=1e-11)

    def test_nonconvergence_raises(self):
        with pytest.raises(NumericFailureError):
            catoni_estimate([0.0, 5.0], CatoniConfig(1.0, tolerance=1e-12, max_iterations=2))


class TestHuber:
    def test_unique_root(self):
        assert huber_m_estimate([0.0, 1.0, 10.0], HuberConfig(1.0)) == pytest.approx(1.0, abs=1e-8)

    def test_flat_interval_midpoint(self):
        assert huber_m_estimate([0.0, 10.0], HuberConfig(1.0)) == pytest.approx(5.0, abs=1e-8)

    def test_large_c_gives_mean(self):
        vals = np.array([1.0, 2.0, 7.0])
        c = float(np.max(np.abs(vals - vals.mean()))) + 1.0
        assert huber_m_estimate(vals, HuberConfig(c)) == pytest.approx(vals.mean(), abs=1e-9)

    def test_grid_scan_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            vals = rng.normal(size=7) * 2.0
            c = rng.uniform(0.2, 2.0)

            def score(nu):
                return huber_clip(vals[None, :] - np.atleast_1d(nu)[:, None], c).sum(axis=1)

            left, right = grid_root_bracket(score, vals.min(), vals.max())
            est = huber_m_estimate(vals, HuberConfig(c, tolerance=1e-12))
            assert left - 1e-6 <= est <= right + 1e-6


class TestSmoothedMom:
    def test_equal_block_means(self):
        vals = np.tile([1.0, 3.0], 4)  # every size-2 block averages 2
        est = smoothed_mom_estimate(vals, SmoothedMomConfig(4, delta=1.0))
        assert est == pytest.approx(2.0, abs=1e-9)

    def test_single_block_is_mean(self):
        vals = np.random.default_rng(8).normal(size=12)
        est = smoothed_mom_estimate(vals, SmoothedMomConfig(1, delta=10.0))
        assert est == pytest.approx(vals.mean(), abs=1e-9)

    def test_saturated_block_hand_value(self):
        est = smoothed_mom_estimate([0.0, 0.0, 100.0], SmoothedMomConfig(3, delta=1.0, tolerance=1e-12))
        assert est == pytest.approx(0.5, abs=1e-9)


class TestLepski:
    def test_constant_sample(self):
        est, k_hat = lepski_adaptive_mom([2.0] * 12, LepskiConfig(1.0))
        assert (est, k_hat) == (2.0, 1)

    def test_estimate_matches_mom_at_k_hat(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            vals = rng.standard_t(3, size=rng.integers(8, 40))
            config = LepskiConfig(float(rng.uniform(0.5, 2.0)), float(rng.uniform(1.0, 3.0)))
            est, k_hat = lepski_adaptive_mom(vals, config)
            assert est == mom_estimate(vals, k_hat)

    def test_outlier_forces_k_hat_by_bruteforce(self):
        vals = np.zeros(16)
        vals[0] = 1e6
        vals[1:] = np.random.default_rng(10).normal(size=15) * 0.1
        config = LepskiConfig(1.0, 1.0)
        est, k_hat = lepski_adaptive_mom(vals, config)
        # independent re-run of the interval intersection
        n = vals.shape[0]
        centers = {k: mom_estimate(vals, k) for k in range(1, n // 2 + 1)}
        radii = {k: 2.0 * math.sqrt(k / n) for k in centers}
        expected = None
        for k in sorted(centers):
            lows = [centers[j] - radii[j] for j in centers if j >= k]
            highs = [centers[j] + radii[j] for j in centers if j >= k]
            if max(lows) <= min(highs):
                expected = k
                break
        assert k_hat == expected
        assert k_hat > 1  # the spike drags interval 1 away from the rest

    def test_needs_four_points(self):
        with pytest.raises(InvalidArgumentError):
            lepski_adaptive_mom([1.0, 2.0, 3.0], LepskiConfig(1.0))


class TestTrimmedMean:
    def test_hand_example(self):
        assert trimmed_mean([0, 1, 2, 3, 100], 0.2) == 2.0

    def test_zero_fraction_is_mean(self):
        vals = np.random.default_rng(11).normal(size=9)
        assert trimmed_mean(vals, 0.0) == pytest.approx(vals.mean(), abs=1e-15)

    def test_symmetric_sample(self):
        for frac in (0.1, 0.3):
            assert trimmed_mean([-4.0, 0.0, 4.0], frac) == 0.0

    def test_invalid_fraction(self):
        with pytest.raises(InvalidArgumentError):
            trimmed_mean([1.0, 2.0], 0.5)
        with pytest.raises(InvalidArgumentError):
            trimmed_mean([1.0, 2.0], -0.1)


class TestEquivariance:
    """est(a X + b) = a est(X) + b for every location estimator here."""

    @staticmethod
    def estimators(vals):
        n = len(vals)
        return {
            "mean": lambda v: empirical_mean(v),
            "mom": lambda v: mom_estimate(v, 5),
            "trimmed": lambda v: trimmed_mean(v, 0.2),
            "huber": lambda v, _s=np.std(vals): huber_m_estimate(
                v, HuberConfig(1.0 * _s if _s > 0 else 1.0, tolerance=1e-13)
            ),
            "smom": lambda v, _s=np.std(vals): smoothed_mom_estimate(
                v, SmoothedMomConfig(5, delta=float(_s) + 1.0, tolerance=1e-13)
            ),
        }

    def test_translation(self):
        rng = np.random.default_rng(12)
        vals = rng.standard_t(4, size=25)
        b = 3.71
        for name, est in self.estimators(vals).items():
            assert est(vals + b) - est(vals) == pytest.approx(b, abs=1e-9), name
        cat = CatoniConfig(0.8, tolerance=1e-13)
        assert catoni_estimate(vals + b, cat) - catoni_estimate(vals, cat) == pytest.approx(
            b, abs=1e-9
        )

    def test_scale_mom(self):
        rng = np.random.default_rng(13)
        vals = rng.normal(size=30)
        a = -2.5
        assert mom_estimate(a * vals, 6) == pytest.approx(a * mom_estimate(vals, 6), abs=1e-10)

    def test_scale_catoni_with_rescaled_alpha(self):
        rng = np.random.default_rng(14)
        vals = rng.normal(size=30)
        a = 4.0
        est = catoni_estimate(vals, CatoniConfig(0.9, tolerance=1e-13))
        scaled = catoni_estimate(a * vals, CatoniConfig(0.9 / a, tolerance=1e-13))
        assert scaled == pytest.approx(a * est, abs=1e-8)


class TestMomDeviationMonteCarlo:
    def test_subgaussian_envelope_small_scale(self):
        # exceedance of 2 sigma sqrt(K/N) at most e^{-K/8} + 3 stderr
        trials, n, k = 20_000, 400, 16
        rng = np.random.default_rng(15)
        mat = rng.standard_normal((trials, n))
        est = mom_estimate_batch(mat, k)
        threshold = 2.0 * math.sqrt(k / n)
        freq = float(np.mean(np.abs(est) > threshold))
        bound = math.exp(-k / 8)
        stderr = math.sqrt(bound * (1 - bound) / trials)
        assert freq <= bound + 3 * stderr
