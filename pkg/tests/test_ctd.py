import math

import numpy as np
import pytest

from ctdhedge import (
    CommonFactorState,
    CorrelationMatrix,
    GaussianVectorSnapshot,
    HullWhiteSpec,
    MarketModel,
    SpreadCurve,
    ctd_common_factor,
    ctd_common_factor_detailed,
    ctd_deterministic,
    fit_gamma,
    integral_variance_estimator,
    max_cdf,
    max_moments,
    shifted_max_ctd,
)
from ctdhedge.ctd import ConditionalCtdTable, ctd_common_factor_conditional
from ctdhedge.spread_model import ModelValidationError


def _state(means, total_vars, gamma, floored=True):
    means = np.asarray(means, dtype=float)
    total = np.asarray(total_vars, dtype=float)
    smin = float(total.min())
    common = gamma * smin
    return CommonFactorState(
        time=1.0,
        gamma=gamma,
        sigma_min_sq=smin,
        component_means=means,
        component_vars=total - common,
        common_var=common,
        floor_at_zero=floored,
    )


class TestFitGamma:
    def test_single_spread_is_zero(self):
        snap = GaussianVectorSnapshot([0.01], [[1e-5]], time=1.0)
        assert fit_gamma(snap) == 0.0

    def test_independent_spreads_give_zero(self):
        snap = GaussianVectorSnapshot([0.01, 0.0], [[1e-5, 0.0], [0.0, 2e-5]], time=1.0)
        assert fit_gamma(snap) == 0.0

    def test_two_spreads_match_off_diagonal_exactly(self):
        cov = np.array([[1e-5, 0.4e-5], [0.4e-5, 2e-5]])
        snap = GaussianVectorSnapshot([0.01, 0.0], cov, time=1.0)
        gamma = fit_gamma(snap)
        assert gamma * 1e-5 == pytest.approx(0.4e-5, rel=1e-12)

    def test_clamped_at_parameterization_boundary(self):
        cov = np.array([[1e-5, 1e-5], [1e-5, 2e-5]])
        snap = GaussianVectorSnapshot([0.0, 0.0], cov, time=1.0)
        assert fit_gamma(snap) == pytest.approx(1.0, abs=1e-8)

    def test_negative_covariance_clamps_to_zero(self):
        cov = np.array([[1e-5, -0.5e-5], [-0.5e-5, 2e-5]])
        snap = GaussianVectorSnapshot([0.0, 0.0], cov, time=1.0)
        assert fit_gamma(snap) == 0.0

    def test_three_spreads_frobenius_fit(self):
        # equal off-diagonals are matched exactly when feasible
        smin = 1e-5
        cov = np.diag([1e-5, 2e-5, 3e-5])
        for i in range(3):
            for j in range(3):
                if i != j:
                    cov[i, j] = 0.3e-5
        snap = GaussianVectorSnapshot([0.0, 0.0, 0.0], cov, time=1.0)
        assert fit_gamma(snap) == pytest.approx(0.3e-5 / smin, abs=1e-7)

    def test_non_psd_snapshot_rejected(self):
        with pytest.raises(ModelValidationError):
            GaussianVectorSnapshot([0.0, 0.0], [[1e-5, 5e-5], [5e-5, 1e-5]], time=1.0)

    def test_paper_parameters_reproduce_off_diagonal(self, flat_pair_model):
        t = 10.0
        cov = flat_pair_model.spread_covariance(t)
        snap = GaussianVectorSnapshot([0.014, 0.0133], cov, time=t)
        gamma = fit_gamma(snap)
        implied = gamma * min(cov[0, 0], cov[1, 1])
        assert implied == pytest.approx(cov[0, 1], rel=1e-12)


class TestMaxCdf:
    def test_floored_below_zero(self):
        st = _state([0.014], [0.005**2], 0.0)
        assert max_cdf(st, -0.01) == 0.0

    def test_single_spread_median(self):
        st = _state([0.014], [0.005**2], 0.0)
        assert max_cdf(st, 0.014) == pytest.approx(0.5, abs=1e-12)

    def test_zero_common_variance_is_product_of_cdfs(self):
        from scipy.special import ndtr

        st = _state([0.002, -0.001], [1e-5, 2e-5], 0.0)
        x = 0.004
        expected = float(
            ndtr((x - 0.002) / math.sqrt(1e-5)) * ndtr((x + 0.001) / math.sqrt(2e-5))
        )
        assert max_cdf(st, x) == pytest.approx(expected, rel=1e-12)

    def test_monotone_with_limits(self):
        st = _state([0.002, -0.001], [1e-5, 2e-5], 0.5)
        xs = np.linspace(-0.01, 0.05, 400)
        vals = max_cdf(st, xs)
        assert np.all(np.diff(vals) >= -1e-12)
        assert vals[0] == 0.0
        assert vals[-1] == pytest.approx(1.0, abs=1e-9)

    def test_unfloored_allows_negative_arguments(self):
        st = _state([-0.01], [1e-6], 0.0, floored=False)
        assert max_cdf(st, -0.01) == pytest.approx(0.5, abs=1e-12)


class TestMaxMoments:
    def test_rectified_standard_normal(self):
        st = _state([0.0], [1.0], 0.0)
        mean, var = max_moments(st)
        assert mean == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-10)
        assert var == pytest.approx(0.5 - 1.0 / (2 * math.pi), rel=1e-10)

    def test_degenerate_components(self):
        st = _state([0.014, 0.0133], [1e-20, 1e-20], 0.0)
        mean, var = max_moments(st)
        assert mean == pytest.approx(0.014, abs=1e-12)
        assert var == pytest.approx(0.0, abs=1e-15)

    def test_deep_negative_mean_floors_at_zero(self):
        st = _state([-0.05], [1e-8], 0.0)
        mean, var = max_moments(st)
        assert mean == pytest.approx(0.0, abs=1e-10)
        assert var == pytest.approx(0.0, abs=1e-12)

    def test_mean_dominates_componentwise_rectified_means(self):
        from scipy.special import ndtr

        st = _state([0.002, -0.001], [1e-5, 2e-5], 0.4)
        mean, _ = max_moments(st)
        for mu, var in zip([0.002, -0.001], [1e-5, 2e-5]):
            sd = math.sqrt(var)
            rectified = mu * ndtr(mu / sd) + sd * math.exp(-0.5 * (mu / sd) ** 2) / math.sqrt(2 * math.pi)
            assert mean >= rectified - 1e-12

    def test_against_frozen_sampling(self):
        # oracle: 1e7 direct draws of the construction (rng PCG64 seed 0):
        # mean 0.0037473450 +/- 1.09e-06, variance 1.1803004e-05
        st = _state([0.002, -0.001], [0.004**2, 0.006**2], 0.4)
        mean, var = max_moments(st)
        assert abs(mean - 0.0037473450) < 3 * 1.09e-06
        assert var == pytest.approx(1.1803004e-05, rel=2e-3)

    def test_unfloored_matches_direct_moments(self):
        st = _state([0.002, -0.001], [0.004**2, 0.006**2], 0.4, floored=False)
        mean, var = max_moments(st)
        # frozen from the same 1e7-draw oracle without the floor
        assert abs(mean - 0.0032790979) < 3 * 1.3e-06
        assert var == pytest.approx(1.6843710e-05, rel=2e-3)

    def test_variance_nonnegative_on_random_states(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            k = rng.integers(1, 4)
            means = rng.normal(0.0, 0.01, k)
            totals = rng.uniform(1e-10, 1e-4, k)
            gamma = rng.uniform(0.0, 0.999)
            mean, var = max_moments(_state(means, totals, gamma))
            assert var >= 0.0
            assert mean >= 0.0


class TestIntegralVarianceEstimator:
    def test_zero_curve(self):
        t = np.linspace(0.0, 10.0, 11)
        assert integral_variance_estimator(t, np.zeros(11), 0.0, 10.0) == 0.0

    def test_constant_curve_polynomial_value(self):
        t = np.linspace(0.0, 10.0, 41)
        v = 1e-4
        got = integral_variance_estimator(t, np.full(41, v), 0.0, 10.0)
        assert got == pytest.approx(v * 100.0, rel=1e-14)

    def test_linear_curve_polynomial_value(self):
        t = np.linspace(0.0, 1.0, 21)
        got = integral_variance_estimator(t, t.copy(), 0.0, 1.0)
        assert got == pytest.approx(1.0 / 3.0, rel=1e-14)

    def test_subinterval_extraction(self):
        t = np.linspace(0.0, 10.0, 101)
        v = np.full(101, 2e-4)
        got = integral_variance_estimator(t, v, 2.0, 7.0)
        assert got == pytest.approx(2e-4 * 25.0, rel=1e-13)

    def test_grid_must_cover(self):
        t = np.linspace(0.0, 5.0, 6)
        with pytest.raises(ModelValidationError):
            integral_variance_estimator(t, np.ones(6), 0.0, 10.0)


class TestDeterministicCtd:
    def test_all_nonpositive_curves(self):
        h = 12.0
        dom = HullWhiteSpec(0.01, 0.0, SpreadCurve.constant(0.0, 0.0, h))
        model = MarketModel(
            dom,
            [HullWhiteSpec(0.01, 0.001, SpreadCurve.constant(-0.004, 0.0, h))],
            CorrelationMatrix(np.eye(2)),
        )
        assert ctd_deterministic(model, 0.0, 10.0) == 1.0

    def test_flat_maximal_spread(self, flat_pair_model):
        assert ctd_deterministic(flat_pair_model, 0.0, 10.0) == pytest.approx(
            math.exp(-0.14), rel=1e-12
        )

    def test_crossing_curves_exact(self, crossing_model):
        got = ctd_deterministic(crossing_model, 0.0, 10.0)
        c1 = crossing_model.spread(1).mean_curve
        c2 = crossing_model.spread(2).mean_curve
        expected = math.exp(-(c1.integral(0.0, 3.6) + c2.integral(3.6, 10.0)))
        assert got == pytest.approx(expected, rel=1e-12)
        # fine Riemann cross-check
        t = np.linspace(0.0, 10.0, 400001)
        integrand = np.maximum(0.0, np.maximum(c1(t), c2(t)))
        assert got == pytest.approx(math.exp(-np.trapezoid(integrand, t)), rel=1e-9)

    def test_maturity_consistency(self, flat_pair_model):
        assert ctd_deterministic(flat_pair_model, 0.0, 0.0) == 1.0
        assert ctd_common_factor(flat_pair_model, 0.0, 0.0) == 1.0


class TestCommonFactorCtd:
    def test_zero_volatility_collapse(self, crossing_model):
        model = crossing_model
        for i in (1, 2):
            model = model.with_spread(i, model.spread(i).bumped_xi(0.0))
        cf = ctd_common_factor(model, 0.0, 10.0)
        det = ctd_deterministic(model, 0.0, 10.0)
        assert cf == pytest.approx(det, abs=1e-9)

    def test_strongly_negative_single_spread(self):
        h = 12.0
        dom = HullWhiteSpec(0.01, 0.0, SpreadCurve.constant(0.0, 0.0, h))
        model = MarketModel(
            dom,
            [HullWhiteSpec(0.05, 1e-5, SpreadCurve.constant(-0.05, 0.0, h))],
            CorrelationMatrix(np.eye(2)),
        )
        assert ctd_common_factor(model, 0.0, 10.0) == pytest.approx(1.0, abs=1e-9)

    def test_first_order_jensen_bound(self, flat_pair_model):
        # exp(-int E[max]) can never exceed the deterministic factor
        detail = ctd_common_factor_detailed(flat_pair_model, 0.0, 20.0)
        det = ctd_deterministic(flat_pair_model, 0.0, 20.0)
        assert math.exp(-detail.mean_integral) <= det + 1e-12
        assert detail.value <= det + 1e-8

    def test_monotone_in_level(self, flat_pair_model):
        base_det = ctd_deterministic(flat_pair_model, 0.0, 10.0)
        base_cf = ctd_common_factor(flat_pair_model, 0.0, 10.0)
        bumped = flat_pair_model.with_spread(1, flat_pair_model.spread(1).bumped_level(0.001))
        assert ctd_deterministic(bumped, 0.0, 10.0) <= base_det
        assert ctd_common_factor(bumped, 0.0, 10.0) <= base_cf + 1e-8

    def test_marginal_fidelity(self, flat_pair_model):
        t = 7.0
        cov = flat_pair_model.spread_covariance(t)
        snap = GaussianVectorSnapshot([0.014, 0.0133], cov, time=t)
        state = CommonFactorState.from_snapshot(snap)
        rebuilt = state.total_vars()
        assert np.allclose(rebuilt, np.diag(cov), atol=1e-12)

    def test_against_frozen_mc(self, flat_pair_model):
        # oracle: 4e5 paths, 80 steps/year (seed 7): 0.728393 +/- 0.000103
        cf = ctd_common_factor(flat_pair_model, 0.0, 20.0)
        assert abs(cf - 0.728393) < 3 * 0.000103


class TestShiftedMax:
    def test_zero_volatility_closed_form(self, crossing_model):
        model = crossing_model
        for i in (1, 2):
            model = model.with_spread(i, model.spread(i).bumped_xi(0.0))
        got = shifted_max_ctd(model, 2, 0.0, 10.0)
        c1 = crossing_model.spread(1).mean_curve
        c2 = crossing_model.spread(2).mean_curve
        max_part = c1.integral(0.0, 3.6) + c2.integral(3.6, 10.0)
        assert got == pytest.approx(math.exp(-(max_part + c2.integral(0.0, 10.0))), rel=1e-9)

    def test_single_positive_spread_doubles(self):
        h = 12.0
        dom = HullWhiteSpec(0.01, 0.0, SpreadCurve.constant(0.0, 0.0, h))
        model = MarketModel(
            dom,
            [HullWhiteSpec(0.05, 1e-6, SpreadCurve.constant(0.01, 0.0, h))],
            CorrelationMatrix(np.eye(2)),
        )
        assert shifted_max_ctd(model, 1, 0.0, 10.0) == pytest.approx(math.exp(-0.2), rel=1e-6)

    def test_against_frozen_mc(self, small_spread_model):
        # oracle: 4e5 paths, 40 steps/year (seed 5):
        #   pivot 1: 0.926698 +/- 1.05e-4 ; pivot 2: 0.936457 +/- 1.03e-4
        model = small_spread_model
        flat = MarketModel(
            HullWhiteSpec(0.01, 0.0, SpreadCurve.constant(0.0, 0.0, 12.0)),
            [HullWhiteSpec(0.0078, 0.0018, SpreadCurve.constant(0.003, 0.0, 12.0)),
             HullWhiteSpec(0.0076, 0.0023, SpreadCurve.constant(0.002, 0.0, 12.0))],
            CorrelationMatrix.from_single(0.3),
        )
        del model
        assert abs(shifted_max_ctd(flat, 1, 0.0, 10.0) - 0.926698) < 4 * 1.05e-4
        assert abs(shifted_max_ctd(flat, 2, 0.0, 10.0) - 0.936457) < 4 * 1.03e-4

    def test_pivot_range_checked(self, flat_pair_model):
        with pytest.raises(ModelValidationError):
            shifted_max_ctd(flat_pair_model, 3, 0.0, 10.0)


class TestConditional:
    def test_zero_displacement_matches_unconditional(self, flat_pair_model):
        cond = ctd_common_factor_conditional(flat_pair_model, 0.0, 10.0, np.zeros((1, 2)))
        assert cond[0] == pytest.approx(ctd_common_factor(flat_pair_model, 0.0, 10.0), rel=1e-12)

    def test_displacement_moves_price_the_right_way(self, flat_pair_model):
        up = ctd_common_factor_conditional(flat_pair_model, 5.0, 10.0, np.array([[0.002, 0.002]]))
        down = ctd_common_factor_conditional(flat_pair_model, 5.0, 10.0, np.array([[-0.002, -0.002]]))
        assert up[0] < down[0]

    def test_table_consistency(self, flat_pair_model):
        anchors = np.linspace(0.0, 10.0, 6)
        table = ConditionalCtdTable(flat_pair_model, anchors, 10.0, nodes_per_year=24)
        rng = np.random.default_rng(0)
        t = anchors[3]
        sds = np.sqrt([flat_pair_model.spread(i).variance(t) for i in (1, 2)])
        pts = np.clip(rng.normal(0.0, 1.0, (100, 2)) * sds, -3.5 * sds, 3.5 * sds)
        direct = ctd_common_factor_conditional(flat_pair_model, t, 10.0, pts, 24, fast_panel=True)
        via = table.evaluate(3, pts)
        assert np.max(np.abs(via / direct - 1.0)) < 3e-3

    def test_table_at_maturity_is_one(self, flat_pair_model):
        table = ConditionalCtdTable(flat_pair_model, [0.0, 10.0], 10.0)
        assert np.all(table.evaluate(1, np.zeros((4, 2))) == 1.0)
