"""Marginal bivariate-normal model for (eta_hat, xi_hat) and its derivatives.

Per study the observed pair is normal with mean
``f = (beta0 + beta1*mu, mu)`` and covariance
``V = Gamma + [[tau2 + beta1^2 sigma2, beta1 sigma2], [beta1 sigma2, sigma2]]``.

Parameter vectors are always ordered (beta0, beta1, mu, tau2, sigma2).
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import kernels
from .data import Dataset

PARAM_NAMES = ("beta0", "beta1", "mu", "tau2", "sigma2")
BETA0, BETA1, MU, TAU2, SIGMA2 = range(5)
NUISANCE = (BETA0, MU, TAU2, SIGMA2)


class Theta(NamedTuple):
    beta0: float
    beta1: float
    mu: float
    tau2: float
    sigma2: float

    @property
    def valid(self) -> bool:
        return self.tau2 > 0 and self.sigma2 > 0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


class MarginalMoments(NamedTuple):
    f: np.ndarray
    v: np.ndarray


class ModelDerivs(NamedTuple):
    """First and second derivatives of the per-study mean and covariance.

    ``df[k]``, ``dv[k]``: derivative in parameter k. ``d2f[j, k]``,
    ``d2v[j, k]``: second derivatives. ``dvinv[k]`` is the derivative of the
    inverse covariance, ``-V^-1 V_k V^-1``.
    """
    df: np.ndarray
    dv: np.ndarray
    d2f: np.ndarray
    d2v: np.ndarray
    dvinv: np.ndarray


class DomainError(ValueError):
    """Variance components outside the parameter space."""


def as_theta(theta) -> Theta:
    if isinstance(theta, Theta):
        return theta
    arr = np.asarray(theta, dtype=float)
    if arr.shape != (5,):
        raise ValueError(f"theta must have 5 components, got shape {arr.shape}")
    return Theta(*(float(v) for v in arr))


def _gamma_array(gamma) -> np.ndarray:
    gm = np.asarray(gamma, dtype=float)
    if gm.shape != (2, 2):
        raise ValueError("gamma must be 2x2")
    return gm


def _latent_cov(th: Theta) -> np.ndarray:
    b1, s2 = th.beta1, th.sigma2
    return np.array([[th.tau2 + b1 * b1 * s2, b1 * s2], [b1 * s2, s2]])


def marginal_moments(theta, gamma) -> MarginalMoments:
    th = as_theta(theta)
    if not th.valid:
        raise DomainError(f"tau2 and sigma2 must be positive, got {th.tau2}, {th.sigma2}")
    f = np.array([th.beta0 + th.beta1 * th.mu, th.mu])
    return MarginalMoments(f, _gamma_array(gamma) + _latent_cov(th))


def _theta_array(theta) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(theta, dtype=float))


def loglik(theta, data: Dataset) -> float:
    """Log-likelihood including the 2*pi constant; ``-inf`` outside tau2, sigma2 > 0."""
    return float(kernels.loglik(_theta_array(theta), data.y, data.g))


def score(theta, data: Dataset) -> np.ndarray:
    """Analytic gradient of ``loglik``.

    Evaluated wherever every marginal covariance is positive definite, which
    includes small negative variance components; finite-difference Hessians
    at the boundary rely on this.
    """
    return kernels.score(_theta_array(theta), data.y, data.g)


def model_derivs(theta, gamma) -> ModelDerivs:
    th = as_theta(theta)
    b1, mu, s2 = th.beta1, th.mu, th.sigma2
    df = np.zeros((5, 2))
    df[BETA0] = (1.0, 0.0)
    df[BETA1] = (mu, 0.0)
    df[MU] = (b1, 1.0)
    dv = np.zeros((5, 2, 2))
    dv[BETA1] = [[2 * b1 * s2, s2], [s2, 0.0]]
    dv[TAU2] = [[1.0, 0.0], [0.0, 0.0]]
    dv[SIGMA2] = [[b1 * b1, b1], [b1, 1.0]]
    d2f = np.zeros((5, 5, 2))
    d2f[BETA1, MU] = d2f[MU, BETA1] = (1.0, 0.0)
    d2v = np.zeros((5, 5, 2, 2))
    d2v[BETA1, BETA1] = [[2 * s2, 0.0], [0.0, 0.0]]
    d2v[BETA1, SIGMA2] = d2v[SIGMA2, BETA1] = [[2 * b1, 1.0], [1.0, 0.0]]
    vinv = np.linalg.inv(_gamma_array(gamma) + _latent_cov(th))
    dvinv = -np.einsum("ab,kbc,cd->kad", vinv, dv, vinv)
    return ModelDerivs(df, dv, d2f, d2v, dvinv)


def expected_info(theta, data: Dataset) -> np.ndarray:
    """Fisher information, 0.5 tr(V^-1 V_j V^-1 V_k) + f_j' V^-1 f_k summed over studies."""
    info = kernels.expected_info(_theta_array(theta), data.y, data.g)
    return 0.5 * (info + info.T)


def fd_step(theta) -> np.ndarray:
    return 1e-5 * np.maximum(1.0, np.abs(np.asarray(theta, dtype=float)))


def observed_info(theta, data: Dataset) -> np.ndarray:
    """Negative Hessian of ``loglik`` by central differences of the analytic score."""
    th = _theta_array(theta)
    steps = fd_step(th)
    hess = np.empty((5, 5))
    for k in range(5):
        e = np.zeros(5)
        e[k] = steps[k]
        hess[:, k] = (score(th + e, data) - score(th - e, data)) / (2 * steps[k])
    return -0.5 * (hess + hess.T)
