"""Weighted least squares and maximum likelihood fits of the control rate regression."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels, linalg
from .data import Dataset
from .likelihood import NUISANCE, TAU2, SIGMA2, Theta, expected_info, loglik, score
from .optimize import OptimizerConfig, STATUS, OptimizationError

log = logging.getLogger(__name__)

SCORE_TOL = 1e-3
DECREMENT_TOL = 1e-3
BOUNDARY_TOL = 1e-4
START_FLOOR = 1e-4


class DegenerateDesignError(ValueError):
    pass


@dataclass
class FitResult:
    theta: Theta
    std_errs: np.ndarray | None
    loglik_value: float
    converged: bool
    iterations: int
    fit_kind: str                       # "wls", "unconstrained" or "constrained"
    beta1_fixed: float | None = None
    score_norm: float = float("nan")
    newton_decrement: float = float("nan")
    residuals: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)


def wls_fit(data: Dataset) -> FitResult:
    """Regress eta_hat on xi_hat with weights 1 / var(eta_hat).

    Standard errors are the classical ones with the residual variance
    estimated on n - 2 degrees of freedom (NaN when n == 2).
    """
    y, x = data.y[:, 0], data.y[:, 1]
    var_eta = data.g[:, 0]
    if np.any(var_eta <= 0):
        raise DegenerateDesignError("every var(eta_hat) must be positive for WLS weights")
    w = 1.0 / var_eta
    xw = np.sum(w * x) / np.sum(w)
    if np.sum(w * (x - xw) ** 2) <= 1e-14 * max(1.0, np.sum(w * x * x)):
        raise DegenerateDesignError("xi_hat has zero weighted variance")
    design = np.column_stack([np.ones_like(x), x])
    xtwx = design.T @ (w[:, None] * design)
    beta = linalg.solve(xtwx, design.T @ (w * y))
    resid = y - design @ beta
    dof = len(y) - 2
    if dof > 0:
        sigma2 = np.sum(w * resid ** 2) / dof
        se = np.sqrt(np.diag(sigma2 * linalg.inverse(xtwx)))
    else:
        se = np.full(2, np.nan)
    nan = float("nan")
    return FitResult(
        theta=Theta(float(beta[0]), float(beta[1]), nan, nan, nan),
        std_errs=np.array([se[0], se[1], nan, nan, nan]),
        loglik_value=nan, converged=True, iterations=0, fit_kind="wls", residuals=resid,
    )


def starting_values(data: Dataset, wls: FitResult | None = None) -> np.ndarray:
    """WLS coefficients, mean(xi_hat), mean squared WLS residual, var(xi_hat).

    Variances that come out below ``START_FLOOR`` (exact fits, identical
    xi_hat) are raised to it so the log-likelihood is finite at the start.
    """
    wls = wls or wls_fit(data)
    xi = data.y[:, 1]
    return np.array([wls.theta.beta0, wls.theta.beta1, xi.mean(),
                     max(np.mean(wls.residuals ** 2), START_FLOOR),
                     max(xi.var(ddof=1), START_FLOOR)])


def _active(grad, theta, free):
    # variance components pinned at zero with the score pushing outward are inactive
    return [k for k in free
            if not (k in (TAU2, SIGMA2) and theta[k] < BOUNDARY_TOL and grad[k] < 0)]


def projected_score_norm(grad, theta, free) -> float:
    """Norm of the score over ``free`` indices, dropping variance components
    pinned at the lower boundary (value near 0 with the score pushing outward)."""
    parts = [grad[k] for k in _active(grad, theta, free)]
    return float(np.linalg.norm(parts)) if parts else 0.0


def newton_decrement(grad, info, theta, free) -> float:
    """``0.5 * g' I^-1 g`` over the active indices: the log-likelihood gain a
    Newton step would still promise. Scale-free, unlike the raw score norm,
    which is dominated by poorly determined variance components."""
    act = _active(grad, theta, free)
    if not act:
        return 0.0
    g = np.asarray(grad)[act]
    try:
        step = linalg.solve(np.asarray(info)[np.ix_(act, act)], g)
    except linalg.SingularMatrixError:
        return float("inf")
    return float(0.5 * g @ step)


def _stationarity(theta, data, free):
    grad = score(theta, data)
    snorm = projected_score_norm(grad, theta, free)
    dec = newton_decrement(grad, expected_info(theta, data), theta, free)
    return snorm, dec


def _check_start(start, data, beta1=None):
    theta = start.copy() if beta1 is None else np.insert(start, 1, beta1)
    if not np.isfinite(loglik(theta, data)):
        raise OptimizationError(f"log-likelihood is not finite at the starting values {theta}")


def fit_mle(data: Dataset, config: OptimizerConfig | None = None, start=None) -> FitResult:
    """Unconstrained maximum likelihood estimate from WLS-based starting values."""
    config = config or OptimizerConfig()
    start = starting_values(data) if start is None else np.asarray(start, dtype=float)
    _check_start(start, data)
    x, fmin, fail, count = kernels.fit_free(np.ascontiguousarray(start), data.y, data.g,
                                            *config.kernel_args())
    theta = Theta(*(float(v) for v in x))
    snorm, dec = _stationarity(theta, data, range(5))
    diagnostics = []
    if fail != 0:
        diagnostics.append(f"optimizer: {STATUS.get(fail, 'failed')}")
    if not dec < DECREMENT_TOL:
        diagnostics.append(f"Newton decrement {dec:.3g} at the optimum (score norm {snorm:.3g})")
    try:
        var = np.diag(linalg.inverse(expected_info(theta, data)))
        if not np.all(np.isfinite(var) & (var > 0)):
            raise linalg.SingularMatrixError(float("nan"))
        se = np.sqrt(var)
    except linalg.SingularMatrixError:
        se = None
        diagnostics.append("expected information singular at the MLE; standard errors omitted")
    for msg in diagnostics:
        log.debug("fit_mle: %s", msg)
    return FitResult(theta=theta, std_errs=se, loglik_value=-float(fmin),
                     converged=(fail == 0 and dec < DECREMENT_TOL), iterations=int(count),
                     fit_kind="unconstrained", score_norm=snorm, newton_decrement=dec,
                     diagnostics=diagnostics)


def fit_constrained(data: Dataset, beta1_0: float, config: OptimizerConfig | None = None,
                    start=None) -> FitResult:
    """Maximum likelihood over (beta0, mu, tau2, sigma2) with beta1 held at ``beta1_0``."""
    config = config or OptimizerConfig()
    if start is None:
        start = np.delete(starting_values(data), 1)
    start = np.ascontiguousarray(start, dtype=float)
    _check_start(start, data, beta1_0)
    x, fmin, fail, count = kernels.fit_fixed(start, data.y, data.g, float(beta1_0),
                                             *config.kernel_args())
    theta = Theta(float(x[0]), float(beta1_0), float(x[1]), float(x[2]), float(x[3]))
    snorm, dec = _stationarity(theta, data, NUISANCE)
    diagnostics = []
    if fail != 0:
        diagnostics.append(f"optimizer: {STATUS.get(fail, 'failed')}")
    if not dec < DECREMENT_TOL:
        diagnostics.append(f"Newton decrement {dec:.3g} at the constrained optimum "
                           f"(restricted score norm {snorm:.3g})")
    for msg in diagnostics:
        log.debug("fit_constrained: %s", msg)
    return FitResult(theta=theta, std_errs=None, loglik_value=-float(fmin),
                     converged=(fail == 0 and dec < DECREMENT_TOL), iterations=int(count),
                     fit_kind="constrained", beta1_fixed=float(beta1_0), score_norm=snorm,
                     newton_decrement=dec, diagnostics=diagnostics)
