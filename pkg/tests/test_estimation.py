import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ctrlrate.data import Dataset
from ctrlrate.estimation import (DECREMENT_TOL, DegenerateDesignError, fit_constrained, fit_mle,
                                 starting_values, wls_fit)
from ctrlrate.likelihood import BETA1, NUISANCE, expected_info, loglik, score
from ctrlrate.optimize import OptimizerConfig

from conftest import random_dataset

TIGHT = OptimizerConfig.tight()


def arrays(eta, xi, var_eta, var_xi):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Dataset.from_arrays(np.asarray(eta, float), np.asarray(xi, float),
                                   np.asarray(var_eta, float), np.asarray(var_xi, float))


class TestWLS:
    def test_reference_values(self, hoes):
        fit = wls_fit(hoes)
        assert round(fit.theta.beta1, 5) == 0.60973
        assert round(fit.std_errs[BETA1], 5) == 0.10892
        assert fit.fit_kind == "wls"

    def test_two_points_interpolated(self):
        fit = wls_fit(arrays([1.0, 4.0], [0.0, 2.0], [0.1, 0.1], [0.1, 0.1]))
        assert_allclose([fit.theta.beta0, fit.theta.beta1], [1.0, 1.5])
        assert np.isnan(fit.std_errs[BETA1])

    def test_equal_weights_is_ols(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=9), rng.normal(size=9)
        fit = wls_fit(arrays(y, x, np.full(9, 0.3), np.full(9, 0.1)))
        slope, intercept = np.polyfit(x, y, 1)
        assert_allclose([fit.theta.beta0, fit.theta.beta1], [intercept, slope], rtol=1e-12)
        resid = y - intercept - slope * x
        se = np.sqrt(resid @ resid / 7 / np.sum((x - x.mean()) ** 2))
        assert_allclose(fit.std_errs[BETA1], se, rtol=1e-12)

    def test_collinear_design(self):
        with pytest.raises(DegenerateDesignError):
            wls_fit(arrays([1.0, 2.0, 3.0], [0.5, 0.5, 0.5], [0.1] * 3, [0.1] * 3))

    def test_starting_values_layout(self, hoes):
        start = starting_values(hoes)
        xi = hoes.y[:, 1]
        assert_allclose(start[2], xi.mean())
        assert_allclose(start[4], xi.var(ddof=1))
        assert start[3] > 0


class TestMLE:
    def test_reference_values(self, hoes):
        fit = fit_mle(hoes)
        assert fit.converged
        assert_allclose(fit.theta.beta1, 0.68917, rtol=5e-3)
        assert_allclose(fit.std_errs[BETA1], 0.08124, rtol=5e-3)
        assert fit.fit_kind == "unconstrained"

    @pytest.mark.parametrize("config", [OptimizerConfig(), TIGHT], ids=["reference", "tight"])
    def test_converged_means_small_newton_decrement(self, hoes, config):
        fit = fit_mle(hoes, config)
        assert fit.converged and fit.newton_decrement < DECREMENT_TOL

    def test_tight_fit_is_stationary(self, hoes):
        fit = fit_mle(hoes, TIGHT)
        assert fit.converged and fit.score_norm < 1e-3

    def test_consistency_large_n(self):
        truth = np.array([-0.5, 0.8, -2.0, 0.3, 0.5])
        # a 3-SE box over 5 components fails on ~1-2% of seeds by chance
        rng = np.random.default_rng(0)
        n = 2000
        var_eta, var_xi = rng.uniform(0.02, 0.2, n), rng.uniform(0.02, 0.2, n)
        xi_true = rng.normal(truth[2], np.sqrt(truth[4]), n)
        eta_true = truth[0] + truth[1] * xi_true + rng.normal(0, np.sqrt(truth[3]), n)
        d = arrays(eta_true + rng.normal(0, np.sqrt(var_eta)),
                   xi_true + rng.normal(0, np.sqrt(var_xi)), var_eta, var_xi)
        fit = fit_mle(d, TIGHT)
        assert fit.converged
        assert np.all(np.abs(fit.theta.as_array() - truth) < 3 * fit.std_errs)

    def test_start_perturbation_invariance(self, hoes):
        ref = fit_mle(hoes, TIGHT).theta.as_array()
        base = starting_values(hoes)
        rng = np.random.default_rng(1)
        for _ in range(10):
            start = base * (1 + 0.1 * rng.choice([-1.0, 1.0], 5))
            assert_allclose(fit_mle(hoes, TIGHT, start=start).theta.as_array(), ref, atol=1e-4)

    def test_degenerate_points_do_not_crash(self):
        d = arrays([1.0] * 6, [0.5, 0.5001, 0.5, 0.4999, 0.5, 0.5002], [2.0] * 6, [2.0] * 6)
        fit = fit_mle(d, TIGHT)
        assert np.isfinite(fit.loglik_value)
        assert isinstance(fit.converged, bool)


class TestConstrained:
    def test_inactive_constraint(self, hoes):
        mle = fit_mle(hoes, TIGHT)
        con = fit_constrained(hoes, mle.theta.beta1, TIGHT)
        assert_allclose(con.theta.as_array(), mle.theta.as_array(), atol=1e-4)
        assert abs(con.loglik_value - mle.loglik_value) < 1e-6
        assert con.std_errs is None and con.fit_kind == "constrained"

    def test_reference_drop_at_one(self, hoes):
        drop = fit_mle(hoes).loglik_value - fit_constrained(hoes, 1.0).loglik_value
        assert_allclose(drop, 2.34472 ** 2 / 2, atol=1e-2)

    def test_beta1_is_frozen(self, hoes):
        assert fit_constrained(hoes, 0.3).theta.beta1 == 0.3

    def test_restricted_score_vanishes(self, hoes):
        for b in (0.4, 1.0, 1.3):
            con = fit_constrained(hoes, b, TIGHT)
            assert con.converged
            g = score(con.theta, hoes)
            assert con.score_norm < 1e-3 and np.max(np.abs(g[list(NUISANCE)])) < 1e-3

    def test_profile_below_maximum(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            d = random_dataset(rng, 10)
            mle = fit_mle(d, TIGHT)
            for b in np.linspace(-1, 3, 9):
                assert fit_constrained(d, b, TIGHT).loglik_value <= mle.loglik_value + 1e-8

    def test_profile_peaks_at_mle(self, hoes):
        mle = fit_mle(hoes, TIGHT)
        grid = mle.theta.beta1 + np.linspace(-0.3, 0.3, 11)
        prof = [fit_constrained(hoes, b, TIGHT).loglik_value for b in grid]
        assert int(np.argmax(prof)) == 5

    def test_loglik_value_matches_theta(self, hoes):
        con = fit_constrained(hoes, 1.0)
        assert_allclose(con.loglik_value, loglik(con.theta, hoes), rtol=1e-12)

    def test_expected_info_positive_definite(self, hoes):
        assert np.all(np.linalg.eigvalsh(expected_info(fit_mle(hoes).theta, hoes)) > 0)
