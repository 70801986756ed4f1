import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ctrlrate import linalg
from ctrlrate.data import Dataset
from ctrlrate.kernels import _loops
from ctrlrate.likelihood import BETA1, MU, SIGMA2, TAU2, expected_info, marginal_moments
from ctrlrate.skovgaard import (INFO_FALLBACK, NEAR_ZERO_R_FLAG, NON_MONOTONE, U_SIGN_GUARD,
                                InformationError, ProfileAnalysis, UnboundedIntervalError,
                                _search_endpoint, confint_beta1, p_value, parse_alternative,
                                q_vector, s_and_q, s_matrix, skovgaard_rbar, test_beta1,
                                u_correction)

from conftest import random_dataset, random_theta

Z95 = 1.959963984540054


@pytest.fixture(scope="module")
def hoes_points(hoes_analysis):
    return hoes_analysis.mle.theta.as_array(), hoes_analysis.at(1.0).constrained.theta.as_array()


class TestSAndQ:
    def test_same_point(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            d, th = random_dataset(rng), random_theta(rng)
            s, q = s_and_q(th, th, d)
            assert np.max(np.abs(s - expected_info(th, d))) < 1e-8
            assert np.all(q == 0.0)

    def test_variance_mean_block_is_zero(self, hoes, hoes_points):
        s = s_matrix(*hoes_points, hoes)
        assert s[TAU2, MU] == 0.0 and s[SIGMA2, MU] == 0.0

    def test_q_variance_components_by_formula(self):
        # q_psi = 1/2 tr{ d(V^-1)/dpsi at hat * V_hat (W_hat - W_tilde) V_hat }
        rng = np.random.default_rng(2)
        for _ in range(20):
            d = random_dataset(rng, 1 + int(rng.integers(1, 4)))
            th = random_theta(rng)
            tt = th.copy()
            tt[BETA1] += rng.normal(0, 0.5)
            q = q_vector(th, tt, d)
            dv = {TAU2: np.array([[1.0, 0.0], [0.0, 0.0]]),
                  SIGMA2: np.array([[th[1] ** 2, th[1]], [th[1], 1.0]])}
            for k, e in dv.items():
                ref = 0.0
                for s in d.studies:
                    vh = marginal_moments(th, s.gamma).v
                    wh, wt = np.linalg.inv(vh), np.linalg.inv(marginal_moments(tt, s.gamma).v)
                    ref += 0.5 * np.trace(-wh @ e @ wh @ vh @ (wh - wt) @ vh)
                assert_allclose(q[k], ref, rtol=1e-10, atol=1e-12)

    def test_monte_carlo_covariances(self, hoes, hoes_points):
        th, tt = hoes_points
        s, q = s_and_q(th, tt, hoes)
        reps = 50000
        rng = np.random.default_rng(0)
        ys = np.empty((reps, hoes.n, 2))
        for i, st in enumerate(hoes.studies):
            m = marginal_moments(th, st.gamma)
            ys[:, i, :] = rng.multivariate_normal(m.f, m.v, reps)
        a, b, dl = np.empty((reps, 5)), np.empty((reps, 5)), np.empty(reps)
        for r in range(reps):
            a[r] = _loops.score(th, ys[r], hoes.g)
            b[r] = _loops.score(tt, ys[r], hoes.g)
            dl[r] = _loops.loglik(th, ys[r], hoes.g) - _loops.loglik(tt, ys[r], hoes.g)
        a -= a.mean(axis=0)
        b -= b.mean(axis=0)
        dl -= dl.mean()
        prod = a[:, :, None] * b[:, None, :]
        assert np.all(np.abs(prod.mean(axis=0) - s) <= 3 * prod.std(axis=0) / math.sqrt(reps))
        pq = a * dl[:, None]
        assert np.all(np.abs(pq.mean(axis=0) - q) <= 3 * pq.std(axis=0) / math.sqrt(reps))

    def test_singular_covariance_names_study(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            d = Dataset.from_arrays(np.array([0.0, 1.0]), np.array([0.0, 2.0]),
                                    np.zeros(2), np.zeros(2))
        bad = np.array([0.0, 1.0, 0.0, 1e-200, 1e-200])
        with pytest.raises(linalg.SingularMatrixError) as info:
            s_and_q(bad, bad, d)
        assert "study 1" in str(info.value.__cause__)


class TestCorrection:
    def test_reference_statistics(self, hoes):
        rep = test_beta1(hoes, 1.0)
        assert_allclose(rep.wald, -3.5830787, rtol=5e-3)
        assert_allclose(rep.r_p, -2.3447177, rtol=5e-3)
        assert_allclose(rep.r_bar, -1.2709290, rtol=5e-3)
        assert_allclose([rep.p_wald, rep.p_r, rep.p_rbar], [0.0003396, 0.0190415, 0.2037539],
                        rtol=5e-3)
        assert rep.converged and rep.alternative == "two_sided"

    def test_correction_shrinks_reference_statistic(self, hoes):
        rep = test_beta1(hoes, 1.0)
        assert np.sign(rep.r_bar) == np.sign(rep.r_p) and abs(rep.r_bar) < abs(rep.r_p)

    def test_vanishes_toward_mle(self, hoes_analysis):
        b = hoes_analysis.beta1_hat
        us, rs = [], []
        for h in (1e-1, 1e-2, 1e-3):
            p = hoes_analysis.at(b + h)
            us.append(abs(p.u))
            rs.append(abs(p.r_p))
        assert us[0] > us[1] > us[2] and rs[0] > rs[1] > rs[2]
        assert us[2] < 1e-2 and rs[2] < 1e-2

    def test_info_fallback(self, hoes, hoes_points):
        th, tt = hoes_points
        i_hat = expected_info(th, hoes)
        j_bad = i_hat.copy()
        j_bad[0, 0] = -j_bad[0, 0]     # indefinite "observed" information
        assert linalg.det(j_bad) < 0
        c = u_correction(th, tt, hoes, j_hat=j_bad, i_hat=i_hat)
        ref = u_correction(th, tt, hoes, j_hat=i_hat, i_hat=i_hat)
        assert INFO_FALLBACK in c.flags and INFO_FALLBACK not in ref.flags
        assert_allclose(c.u, ref.u, rtol=1e-12)

    def test_information_error_when_fallback_fails(self, hoes, hoes_points):
        th, tt = hoes_points
        bad = -np.eye(5)        # determinant -1 for both
        with pytest.raises(InformationError):
            u_correction(th, tt, hoes, j_hat=bad, i_hat=bad)

    def test_null_at_mle(self, hoes, hoes_analysis):
        rep = test_beta1(hoes, hoes_analysis.beta1_hat, analysis=hoes_analysis)
        assert abs(rep.r_p) < 1e-6 and rep.p_r > 0.999
        assert NEAR_ZERO_R_FLAG in rep.diagnostics

    @pytest.mark.parametrize("b0", [0.2, 0.5, 0.8, 1.2])
    def test_report_invariants(self, hoes, hoes_analysis, b0):
        rep = test_beta1(hoes, b0, analysis=hoes_analysis)
        for p in (rep.p_wald, rep.p_r, rep.p_rbar):
            assert 0.0 <= p <= 1.0
        assert np.sign(rep.r_p) == np.sign(hoes_analysis.beta1_hat - b0)
        assert_allclose(rep.p_r, 2 * p_value(-abs(rep.r_p), "less"))

    def test_non_finite_null_rejected(self, hoes):
        with pytest.raises(ValueError):
            test_beta1(hoes, float("nan"))


class TestGuards:
    def test_regular(self):
        r_bar, flags = skovgaard_rbar(-2.0, -1.0)
        assert_allclose(r_bar, -2.0 + math.log(0.5) / -2.0)
        assert flags == set()

    def test_near_zero(self):
        assert skovgaard_rbar(5e-5, 1.0) == (5e-5, {NEAR_ZERO_R_FLAG})

    @pytest.mark.parametrize("u", [0.0, -1.0, float("nan")])
    def test_sign_guard(self, u):
        assert skovgaard_rbar(1.5, u) == (1.5, {U_SIGN_GUARD})

    def test_negative_pair_is_valid(self):
        r_bar, flags = skovgaard_rbar(-1.5, -0.5)
        assert not flags and r_bar > -1.5


class TestPValues:
    @pytest.mark.parametrize("stat", [-3.0, -0.4, 0.0, 1.1, 2.5])
    def test_tails(self, stat):
        lo = p_value(stat, "less")
        assert_allclose(lo + p_value(stat, "greater"), 1.0)
        assert_allclose(p_value(stat, "two_sided"), 2 * min(lo, 1 - lo), rtol=1e-12)

    def test_parse(self):
        assert parse_alternative("two.sided") == "two_sided"
        assert parse_alternative("Less") == "less"
        assert parse_alternative("g") == "greater"
        with pytest.raises(ValueError):
            parse_alternative("sideways")


class TestIntervals:
    def test_wald_closed_form(self, hoes):
        ci = confint_beta1(hoes, 0.95, "wald")
        assert_allclose([ci.lower, ci.upper], [0.60973 - Z95 * 0.10892, 0.60973 + Z95 * 0.10892],
                        atol=1e-5)

    def test_signed_root_reference(self, hoes, hoes_analysis):
        ci = confint_beta1(hoes, 0.95, "r_p", analysis=hoes_analysis)
        assert_allclose([ci.lower, ci.upper], [0.45, 0.93], atol=0.01)
        assert ci.lower < hoes_analysis.beta1_hat < ci.upper

    def test_endpoints_are_roots(self, hoes, hoes_analysis):
        for kind in ("r_p", "r_bar"):
            ci = confint_beta1(hoes, 0.95, kind, analysis=hoes_analysis)
            attr = "r_p" if kind == "r_p" else "r_bar"
            # the reference-tolerance constrained fits carry ~1e-4 noise in the statistic
            assert_allclose(getattr(hoes_analysis.at(ci.upper), attr), -Z95, atol=1e-3)
            assert_allclose(getattr(hoes_analysis.at(ci.lower), attr), Z95, atol=1e-3)
            assert ci.lower < hoes_analysis.beta1_hat < ci.upper

    def test_skovgaard_upper_reference(self, hoes, hoes_analysis):
        ci = confint_beta1(hoes, 0.95, "rbar", analysis=hoes_analysis)
        assert ci.statistic_kind == "r_bar"
        assert_allclose(ci.upper, 1.13, atol=0.01)

    def test_signed_root_decreasing(self, hoes_analysis):
        b, se = hoes_analysis.beta1_hat, hoes_analysis.se_mle
        grid = b + np.linspace(-3, 3, 11) * se
        r = np.array([hoes_analysis.at(x, with_correction=False).r_p for x in grid])
        assert np.all(np.diff(r) < 0)
        assert r[5] == 0.0
        assert np.max(np.abs(np.diff(r))) < 1.5    # no jumps

    def test_level_validation(self, hoes):
        with pytest.raises(ValueError):
            confint_beta1(hoes, 1.0, "wald")
        with pytest.raises(ValueError):
            confint_beta1(hoes, 0.9, "score")

    def test_search_finds_root(self):
        flags = set()
        root = _search_endpoint(lambda b: -2.0 * b, 0.0, 0.1, +1, -1.0, 0.0, flags)
        assert_allclose(root, 0.5, atol=1e-6)
        root = _search_endpoint(lambda b: -2.0 * b, 0.0, 0.1, -1, 1.0, 0.0, flags)
        assert_allclose(root, -0.5, atol=1e-6)
        assert not flags

    def test_search_unbounded(self):
        flags = set()
        assert _search_endpoint(lambda b: -math.tanh(b), 0.0, 0.1, +1, -2.0, 0.0, flags) == math.inf
        assert "unbounded-upper" in flags

    def test_search_flags_non_monotone(self):
        flags = set()
        _search_endpoint(lambda b: -b + 3 * math.sin(b), 0.0, 1.0, +1, -10.0, 0.0, flags)
        assert NON_MONOTONE in flags

    def test_strict_unbounded_raises(self, hoes, monkeypatch):
        monkeypatch.setattr("ctrlrate.skovgaard.BRACKET_STEPS", (0.25,))
        with pytest.raises(UnboundedIntervalError):
            confint_beta1(hoes, 0.95, "r_p", strict=True)
