"""Rate estimator tests: batch means, slope fits, expected log progress."""

import math

import numpy as np
import pytest

import eslr
from eslr import (
    AlgorithmConfig,
    ConfigError,
    batch_means_variance,
    default_config,
    estimate_rate,
    expected_log_progress,
    fit_slopes,
    linear,
    order_stat_m2,
    rng_from_seed,
    run,
    simulate_chain,
    sphere,
)


class TestBatchMeansVariance:
    def test_iid_matches_plain_variance(self):
        """On i.i.d. data the batch-means estimate approximates the sample
        variance (averaged over sequences; a single estimate has ~26%
        relative noise at 30 batches)."""
        estimates = [
            batch_means_variance(rng_from_seed(s).standard_normal(120_000), 30)
            for s in range(8)
        ]
        assert np.mean(estimates) == pytest.approx(1.0, rel=0.2)

    def test_degenerate_sequence_gives_zero(self):
        assert batch_means_variance(np.full(1000, 0.25), 10) == 0.0

    def test_too_few_batches_rejected(self):
        with pytest.raises(ConfigError):
            batch_means_variance(np.arange(100.0), 1)

    def test_more_batches_than_samples_rejected(self):
        with pytest.raises(ConfigError):
            batch_means_variance(np.arange(10.0), 20)

    def test_positively_correlated_data_inflates_variance(self):
        """An AR(1) sequence with coefficient 0.9 has asymptotic variance
        (1+phi)/(1-phi) times the marginal one; batch means must see it."""
        rng = rng_from_seed(1)
        phi = 0.9
        eps = rng.standard_normal(200_000)
        x = np.empty_like(eps)
        x[0] = eps[0]
        for i in range(1, len(eps)):
            x[i] = phi * x[i - 1] + eps[i]
        marginal = x.var(ddof=1)
        est = batch_means_variance(x, 30)
        target = marginal * (1 + phi) / (1 - phi)
        assert est == pytest.approx(target, rel=0.5)


class TestEstimateRate:
    def test_constant_rule_exact(self):
        cfg = default_config(10, rule="constant", const_factor=2.0)
        est = estimate_rate(sphere(10), cfg, np.ones(10), t=2000, seed=0)
        assert est.rate == math.log(2.0)
        assert est.gamma2 == 0.0
        assert est.ci == (est.rate, est.rate)

    def test_preconditions(self):
        cfg = default_config(10)
        with pytest.raises(ConfigError):
            estimate_rate(sphere(10), cfg, np.ones(10), t=500, burn_in=100, seed=0)
        with pytest.raises(ConfigError):
            estimate_rate(sphere(10), cfg, np.ones(10), t=2000, batches=1, seed=0)

    def test_linear_ci_contains_quadrature_target(self):
        """On a linear function with mu=1, lam=3, the rate interval covers
        the order-statistic drift (E[(N^(1:3))^2] - 1) / (2 d n)."""
        cfg = AlgorithmConfig(n=5, lam=3, mu=1, weights=np.array([1.0]))
        target = (order_stat_m2(1, 3) - 1.0) / (2.0 * 1.0 * 5)
        est = estimate_rate(linear(5), cfg, np.zeros(5), t=100_000, seed=2)
        assert est.ci[0] <= target <= est.ci[1]

    def test_sphere_rate_negative_with_ci_excluding_zero(self):
        est = estimate_rate(sphere(10), default_config(10), np.ones(10), t=50_000, seed=4)
        assert est.rate < 0
        assert est.ci[1] < 0

    def test_rate_sign_matches_slopes(self):
        """The estimated rate sign agrees with the fitted tail slopes."""
        cfg = default_config(10)
        # converging case
        est = estimate_rate(sphere(10), cfg, np.ones(10), t=20_000, seed=5)
        fit = fit_slopes(run(cfg, sphere(10), np.ones(10), 1.0, 4000, seed=6))
        assert est.rate < 0 and fit.slope_x < 0 and fit.slope_sigma < 0
        # diverging case
        est = estimate_rate(linear(10), cfg, np.zeros(10), t=20_000, seed=7)
        fit = fit_slopes(run(cfg, linear(10), np.ones(10), 1.0, 4000, seed=8))
        assert est.rate > 0 and fit.slope_sigma > 0 and fit.slope_x > 0


class TestFitSlopes:
    def test_constant_rule_sigma_slope_exact(self):
        cfg = default_config(10, rule="constant", const_factor=2.0)
        trace = run(cfg, linear(10), np.ones(10), 1.0, 500, seed=0)
        fit = fit_slopes(trace, 1.0)
        assert fit.slope_sigma == pytest.approx(math.log(2.0), abs=1e-12)

    def test_requires_hundred_rows(self):
        cfg = default_config(10)
        trace = run(cfg, sphere(10), np.ones(10), 1.0, 99, seed=1)
        with pytest.raises(ConfigError):
            fit_slopes(trace)

    def test_tail_fraction_validated(self):
        cfg = default_config(10)
        trace = run(cfg, sphere(10), np.ones(10), 1.0, 200, seed=1)
        with pytest.raises(ConfigError):
            fit_slopes(trace, 0.0)

    def test_sphere_same_rate_for_x_and_sigma(self):
        """Distance and step-size fall at the same linear rate (within 5%)."""
        trace = run(default_config(10), sphere(10), np.ones(10), 1.0, 20_000, seed=11)
        fit = fit_slopes(trace, 0.5)
        assert fit.slope_x < 0 and fit.slope_sigma < 0
        assert abs(fit.slope_x - fit.slope_sigma) <= 0.05 * abs(fit.slope_x)

    def test_initial_step_size_does_not_change_tail_slope(self):
        """sigma0 = 1 and sigma0 = 1e-11 give matching tail slopes (10%)."""
        cfg = default_config(10)
        fits = [
            fit_slopes(run(cfg, sphere(10), np.ones(10), s0, 20_000, seed=(11, j)), 0.5)
            for j, s0 in enumerate((1.0, 1e-11))
        ]
        assert abs(fits[0].slope_x - fits[1].slope_x) <= 0.10 * abs(fits[0].slope_x)

    def test_truncates_machine_zero_tail(self):
        trace = eslr.RunTrace(
            k=np.arange(200),
            dist=np.concatenate([np.exp(-0.05 * np.arange(150)), np.zeros(50)]),
            sigma=np.exp(-0.05 * np.arange(200)),
            log_gamma=np.full(200, -0.05),
        )
        fit = fit_slopes(trace, 1.0)
        assert fit.truncated
        assert fit.slope_x == pytest.approx(-0.05, abs=1e-9)


class TestExpectedLogProgress:
    def test_constant_rule_every_entry_exact(self):
        cfg = default_config(4, rule="constant", const_factor=3.0)
        means, ses = expected_log_progress(sphere(4), cfg, np.ones(4), 20, 100, seed=0)
        assert np.all(means == math.log(3.0))
        assert np.all(ses == 0.0)

    def test_replicate_floor(self):
        with pytest.raises(ConfigError):
            expected_log_progress(sphere(4), default_config(4), np.ones(4), 20, 50, seed=0)

    def test_sphere_tail_consistent_with_estimate_rate(self):
        """The tail of the expected log progress curve agrees with the
        long-chain rate estimate within joint uncertainty."""
        cfg = default_config(10)
        f = sphere(10)
        means, ses = expected_log_progress(f, cfg, np.ones(10), 400, 200, seed=17)
        est = estimate_rate(f, cfg, np.ones(10), t=100_000, seed=18)
        tail_mean = means[200:].mean()
        rate_se = math.sqrt(est.gamma2 / (est.t - est.burn_in))
        # the tail entries are correlated in k; bound their joint error by
        # the average pointwise standard error
        tail_se = ses[200:].mean()
        assert abs(tail_mean - est.rate) <= 4 * math.hypot(tail_se, rate_se)

    def test_stationary_from_start_on_linear(self):
        """On a linear function the expected change is flat in k from the
        first iteration (no adaptation transient)."""
        cfg = default_config(10)
        means, _ = expected_log_progress(linear(10), cfg, np.zeros(10), 300, 150, seed=19)
        k = np.arange(300.0)
        design = np.vstack([k, np.ones_like(k)]).T
        coef, *_ = np.linalg.lstsq(design, means, rcond=None)
        resid = means - design @ coef
        se_slope = math.sqrt(
            float(resid @ resid) / (len(k) - 2) / float(((k - k.mean()) ** 2).sum())
        )
        assert abs(coef[0]) <= 4 * se_slope

    def test_threaded_equals_sequential(self):
        cfg = default_config(6)
        a = expected_log_progress(sphere(6), cfg, np.ones(6), 50, 100, seed=23, threads=1)
        b = expected_log_progress(sphere(6), cfg, np.ones(6), 50, 100, seed=23, threads=4)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestCltScaling:
    def test_ci_width_halves_when_t_quadruples(self):
        """Quadrupling the kept chain length halves the CI width (25% rel)."""
        cfg = default_config(10)
        f = sphere(10)
        est1 = estimate_rate(f, cfg, np.ones(10), t=25_000, burn_in=0, seed=29)
        est4 = estimate_rate(f, cfg, np.ones(10), t=100_000, burn_in=0, seed=30)
        ratio = est4.ci_width() / est1.ci_width()
        assert abs(ratio - 0.5) <= 0.125

    def test_batch_count_robustness(self):
        """gamma^2 from 20 and 40 batches agree within 50% on one chain."""
        lgs, _ = simulate_chain(sphere(10), default_config(10), np.ones(10), 200_000, seed=11)
        g20 = batch_means_variance(lgs, 20)
        g40 = batch_means_variance(lgs, 40)
        assert abs(g20 - g40) <= 0.5 * g20
