"""Signed profile likelihood root and Skovgaard's second-order statistic for beta1.

With theta_hat the MLE and theta_tilde the constrained MLE at beta1 = b,

    r(b)    = sign(beta1_hat - b) * sqrt(2 * (l(theta_hat) - l(theta_tilde)))
    rbar(b) = r + log(u / r) / r
    u       = [S^-1 q]_beta1 |j_hat|^(1/2) |i_hat|^(-1) |S| |j_tilde_nuis|^(-1/2)

where S = cov(score(theta_1), score(theta_2)) and
q = cov(score(theta_1), l(theta_1) - l(theta_2)), both taken under the model
at theta_1 = theta_hat and evaluated at theta_2 = theta_tilde.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from . import kernels, linalg
from .data import Dataset
from .estimation import FitResult, fit_constrained, fit_mle, starting_values, wls_fit
from .likelihood import BETA1, NUISANCE, expected_info, observed_info
from .optimize import OptimizerConfig

log = logging.getLogger(__name__)

_STD_NORMAL = NormalDist()
NEAR_ZERO_R = 1e-4
SAME_POINT_TOL = 1e-12

# diagnostic flags
INFO_FALLBACK = "info-fallback"
U_SIGN_GUARD = "u-sign-guard"
NEAR_ZERO_R_FLAG = "near-zero-r"
PROFILE_CLAMP = "profile-clamp"
NON_MONOTONE = "non-monotone"
NOT_CONVERGED = "not-converged"


class SingularSError(linalg.SingularMatrixError):
    """The S matrix is singular, so u cannot be formed."""


class InformationError(ValueError):
    """Neither observed nor expected information has a positive determinant."""


def _pair(theta_hat, theta_tilde):
    return (np.ascontiguousarray(theta_hat, dtype=float),
            np.ascontiguousarray(theta_tilde, dtype=float))


def _check_study_covariances(theta, data, label):
    th = np.asarray(theta, dtype=float)
    b1, t2, s2 = th[1], th[3], th[4]
    v11 = data.g[:, 0] + t2 + b1 * b1 * s2
    v12 = data.g[:, 1] + b1 * s2
    v22 = data.g[:, 2] + s2
    det = v11 * v22 - v12 * v12
    bad = np.flatnonzero(~(det > linalg.SINGULAR_GUARD))
    if bad.size:
        raise linalg.SingularMatrixError(float(det[bad[0]])) from ValueError(
            f"marginal covariance of study {bad[0] + 1} is singular at {label}")


def s_and_q(theta_hat, theta_tilde, data: Dataset):
    th, tt = _pair(theta_hat, theta_tilde)
    _check_study_covariances(th, data, "theta_hat")
    _check_study_covariances(tt, data, "theta_tilde")
    return kernels.s_and_q(th, tt, data.y, data.g)


def s_matrix(theta_hat, theta_tilde, data: Dataset) -> np.ndarray:
    """cov(score at theta_hat, score at theta_tilde) under the model at theta_hat."""
    return s_and_q(theta_hat, theta_tilde, data)[0]


def q_vector(theta_hat, theta_tilde, data: Dataset) -> np.ndarray:
    """cov(score at theta_hat, l(theta_hat) - l(theta_tilde)) under the model at theta_hat."""
    return s_and_q(theta_hat, theta_tilde, data)[1]


@dataclass
class Correction:
    u: float
    s: np.ndarray
    q: np.ndarray
    flags: set = field(default_factory=set)


def _nuisance_block(m):
    return m[np.ix_(NUISANCE, NUISANCE)]


def u_correction(theta_hat, theta_tilde, data: Dataset, j_hat=None, i_hat=None) -> Correction:
    """The correction term u, with S and q.

    ``j_hat`` and ``i_hat`` (observed and expected information at theta_hat)
    may be passed in to skip recomputation. A non-positive determinant of
    the observed information at either point is replaced by the expected
    information there, flagged ``info-fallback``.
    """
    flags = set()
    s, q = s_and_q(theta_hat, theta_tilde, data)
    i_hat = expected_info(theta_hat, data) if i_hat is None else np.asarray(i_hat, dtype=float)
    j_hat = observed_info(theta_hat, data) if j_hat is None else np.asarray(j_hat, dtype=float)
    det_j = linalg.det(j_hat)
    if not det_j > 0:
        flags.add(INFO_FALLBACK)
        log.info("observed information at the MLE has determinant %.3g; "
                    "using expected information (check the MLE)", det_j)
        det_j = linalg.det(i_hat)
        if not det_j > 0:
            raise InformationError(f"information at the MLE is not positive definite "
                                   f"(determinant {det_j:.3g})")
    det_jt = linalg.det(_nuisance_block(observed_info(theta_tilde, data)))
    if not det_jt > 0:
        flags.add(INFO_FALLBACK)
        log.info("observed nuisance information at the constrained MLE has determinant "
                    "%.3g; using expected information (check the constrained MLE)", det_jt)
        det_jt = linalg.det(_nuisance_block(expected_info(theta_tilde, data)))
        if not det_jt > 0:
            raise InformationError(f"nuisance information at the constrained MLE is not "
                                   f"positive definite (determinant {det_jt:.3g})")
    det_s = linalg.det(s)
    if not abs(det_s) > linalg.SINGULAR_GUARD:
        raise SingularSError(det_s)
    det_i = linalg.det(i_hat)
    if not abs(det_i) > linalg.SINGULAR_GUARD:
        raise InformationError("expected information at the MLE is singular")
    s_inv_q = linalg.solve(s, q)
    u = s_inv_q[BETA1] * math.sqrt(det_j) / det_i * det_s / math.sqrt(det_jt)
    return Correction(u=float(u), s=s, q=q, flags=flags)


def skovgaard_rbar(r: float, u: float):
    """``r + log(u / r) / r`` with guards; returns ``(rbar, flags)``."""
    if abs(r) < NEAR_ZERO_R:
        return r, {NEAR_ZERO_R_FLAG}
    ratio = u / r
    if not ratio > 0 or not math.isfinite(ratio):
        return r, {U_SIGN_GUARD}
    return r + math.log(ratio) / r, set()


def parse_alternative(alternative: str) -> str:
    key = alternative.strip().lower().replace(".", "_").replace("-", "_")
    for name in ("two_sided", "less", "greater"):
        if key and name.startswith(key):
            return name
    raise ValueError(f"alternative must be two_sided, less or greater, got {alternative!r}")


def p_value(stat: float, alternative: str) -> float:
    alternative = parse_alternative(alternative)
    if alternative == "less":
        return _STD_NORMAL.cdf(stat)
    if alternative == "greater":
        return 1.0 - _STD_NORMAL.cdf(stat)
    return 2.0 * _STD_NORMAL.cdf(-abs(stat))


@dataclass
class ProfilePoint:
    beta1: float
    r_p: float
    r_bar: float
    u: float
    constrained: FitResult
    correction: Correction | None
    flags: set


class ProfileAnalysis:
    """Fits shared by every test or interval computation on one dataset.

    The WLS fit, the MLE and the information matrices at the MLE are computed
    once; :meth:`at` then only needs a constrained fit per value of beta1.
    """

    def __init__(self, data: Dataset, config: OptimizerConfig | None = None):
        self.data = data
        self.config = config or OptimizerConfig()
        self.wls = wls_fit(data)
        self.start = starting_values(data, self.wls)
        self.mle = fit_mle(data, self.config, start=self.start)
        theta = self.mle.theta
        self.i_hat = expected_info(theta, data)
        self.j_hat = observed_info(theta, data)

    @property
    def beta1_hat(self) -> float:
        return self.mle.theta.beta1

    @property
    def se_wald(self) -> float:
        se = float(self.wls.std_errs[BETA1])
        return se if math.isfinite(se) and se > 0 else self.se_mle

    @property
    def se_mle(self) -> float:
        se = self.mle.std_errs
        if se is not None and math.isfinite(se[BETA1]) and se[BETA1] > 0:
            return float(se[BETA1])
        return float(self.wls.std_errs[BETA1])

    def at(self, beta1_0: float, with_correction: bool = True) -> ProfilePoint:
        data, mle = self.data, self.mle
        flags = set()
        if abs(beta1_0 - self.beta1_hat) <= SAME_POINT_TOL * max(1.0, abs(beta1_0)):
            # the constrained MLE at beta1_hat is the MLE itself
            constrained = FitResult(theta=mle.theta, std_errs=None,
                                    loglik_value=mle.loglik_value, converged=mle.converged,
                                    iterations=0, fit_kind="constrained",
                                    beta1_fixed=float(beta1_0))
        else:
            constrained = fit_constrained(data, beta1_0, self.config,
                                          start=np.delete(self.start, BETA1))
        if not constrained.converged:
            flags.add(NOT_CONVERGED)
        drop = mle.loglik_value - constrained.loglik_value
        if drop < 0:
            flags.add(PROFILE_CLAMP)
            drop = 0.0
        r = math.copysign(math.sqrt(2.0 * drop), self.beta1_hat - beta1_0)
        if self.beta1_hat == beta1_0:
            r = 0.0
        correction = None
        u = float("nan")
        r_bar = r
        if with_correction:
            if abs(r) < NEAR_ZERO_R:
                flags.add(NEAR_ZERO_R_FLAG)
            else:
                correction = u_correction(mle.theta, constrained.theta, data,
                                          j_hat=self.j_hat, i_hat=self.i_hat)
                u = correction.u
                flags |= correction.flags
                r_bar, guard = skovgaard_rbar(r, u)
                flags |= guard
        return ProfilePoint(beta1=float(beta1_0), r_p=r, r_bar=r_bar, u=u,
                            constrained=constrained, correction=correction, flags=flags)


@dataclass
class TestReport:
    beta1_null: float
    alternative: str
    wald: float
    r_p: float
    r_bar: float
    u: float
    p_wald: float
    p_r: float
    p_rbar: float
    diagnostics: set
    wls: FitResult
    mle: FitResult
    constrained: FitResult
    wald_mle: float
    s: np.ndarray | None = None
    q: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.mle.converged and self.constrained.converged

    __test__ = False  # not a pytest class


def test_beta1(data: Dataset, beta1_null: float, alternative: str = "two_sided",
               config: OptimizerConfig | None = None,
               analysis: ProfileAnalysis | None = None) -> TestReport:
    """Wald (WLS-based), signed profile likelihood root and Skovgaard tests of beta1."""
    if not math.isfinite(beta1_null):
        raise ValueError("beta1_null must be finite")
    alternative = parse_alternative(alternative)
    analysis = analysis or ProfileAnalysis(data, config)
    wls, mle = analysis.wls, analysis.mle
    point = analysis.at(beta1_null)
    wald = (wls.theta.beta1 - beta1_null) / wls.std_errs[BETA1]
    wald_mle = (mle.theta.beta1 - beta1_null) / analysis.se_mle
    flags = set(point.flags)
    if not mle.converged:
        flags.add(NOT_CONVERGED)
    return TestReport(
        beta1_null=float(beta1_null), alternative=alternative, wald=float(wald),
        r_p=point.r_p, r_bar=point.r_bar, u=point.u,
        p_wald=p_value(wald, alternative), p_r=p_value(point.r_p, alternative),
        p_rbar=p_value(point.r_bar, alternative), diagnostics=flags, wls=wls, mle=mle,
        constrained=point.constrained, wald_mle=float(wald_mle),
        s=None if point.correction is None else point.correction.s,
        q=None if point.correction is None else point.correction.q,
    )


test_beta1.__test__ = False


STATISTIC_KINDS = ("wald", "r_p", "r_bar")


@dataclass
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    statistic_kind: str
    diagnostics: set = field(default_factory=set)

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


class UnboundedIntervalError(RuntimeError):
    pass


def _normalize_kind(kind: str) -> str:
    key = kind.strip().lower().replace("-", "_")
    aliases = {"rp": "r_p", "rbar": "r_bar", "r_bar": "r_bar", "r_p": "r_p", "wald": "wald"}
    if key not in aliases:
        raise ValueError(f"unknown statistic {kind!r}")
    return aliases[key]


BRACKET_STEPS = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 50.0)
BISECTION_TOL = 1e-6
RBAR_EXCLUSION = 1e-3


def _search_endpoint(stat_at, center, se, direction, target, inner, flags):
    """Find b = center + direction * t (t > 0) with stat(b) = target.

    The statistic decreases in b, so on the upper side it falls through
    ``target`` (negative) and on the lower side rises through it (positive).
    Returns +-inf when the cap of 50 standard errors is reached first.
    """
    def excess(b):
        val = stat_at(b)
        return (val - target) * (-direction)   # < 0 inside the interval, > 0 beyond

    t_in = inner
    prev_val = excess(center + direction * inner) if inner > 0 else None
    for k in BRACKET_STEPS:
        t_out = k * se
        b_out = center + direction * t_out
        val = excess(b_out)
        if prev_val is not None and val < prev_val:
            flags.add(NON_MONOTONE)
        prev_val = val
        if val >= 0:
            break
        t_in = t_out
    else:
        flags.add("unbounded-upper" if direction > 0 else "unbounded-lower")
        return direction * math.inf
    lo_t, hi_t = t_in, t_out
    while hi_t - lo_t > BISECTION_TOL:
        mid = 0.5 * (lo_t + hi_t)
        if excess(center + direction * mid) >= 0:
            hi_t = mid
        else:
            lo_t = mid
    return center + direction * 0.5 * (lo_t + hi_t)


def confint_beta1(data: Dataset, level: float = 0.95, statistic_kind: str = "r_bar",
                  config: OptimizerConfig | None = None,
                  analysis: ProfileAnalysis | None = None,
                  strict: bool = False) -> ConfidenceInterval:
    """Confidence interval for beta1 by inverting the chosen statistic.

    ``wald`` is the closed-form WLS interval. ``r_p`` and ``r_bar`` solve
    stat(b) = -+z on each side of the MLE: outward bracketing in steps of
    the WLS standard error (up to 50), then bisection to 1e-6. An endpoint
    with no sign change inside the cap is returned as +-inf (or raises
    ``UnboundedIntervalError`` when ``strict``).
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    kind = _normalize_kind(statistic_kind)
    z = _STD_NORMAL.inv_cdf(0.5 + level / 2)
    flags = set()
    if kind == "wald":
        wls = analysis.wls if analysis is not None else wls_fit(data)
        b, se = wls.theta.beta1, wls.std_errs[BETA1]
        return ConfidenceInterval(b - z * se, b + z * se, level, kind, flags)

    analysis = analysis or ProfileAnalysis(data, config)
    center, se = analysis.beta1_hat, analysis.se_wald
    with_corr = kind == "r_bar"

    def stat_at(b):
        point = analysis.at(b, with_correction=with_corr)
        flags.update(point.flags - {NEAR_ZERO_R_FLAG})
        return point.r_bar if with_corr else point.r_p

    inner = RBAR_EXCLUSION * se if with_corr else 0.0
    upper = _search_endpoint(stat_at, center, se, +1, -z, inner, flags)
    lower = _search_endpoint(stat_at, center, se, -1, +z, inner, flags)
    if strict and not (math.isfinite(lower) and math.isfinite(upper)):
        raise UnboundedIntervalError(f"{kind} interval is unbounded: ({lower}, {upper})")
    return ConfidenceInterval(float(lower), float(upper), level, kind, flags)
