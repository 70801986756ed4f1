"""Homogeneous random-effects meta-analysis in closed form.

Y_i ~ N(upsilon, omega) with omega = sigma2 + tau2 and sigma2 known. Interest
is in upsilon; omega is the nuisance parameter. Every Skovgaard ingredient
has a closed form here, which makes the model an analytic testbed for the
general assembly used by the control rate regression.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .skovgaard import INFO_FALLBACK, skovgaard_rbar

OMEGA_FLOOR_OFFSET = 1e-12
DEGENERATE = "degenerate"
FLOORED = "omega-floored"


@dataclass(frozen=True)
class REData:
    y: tuple
    sigma2: float

    def __post_init__(self):
        y = tuple(float(v) for v in self.y)
        if len(y) < 2:
            raise ValueError("need at least two studies")
        if not all(math.isfinite(v) for v in y):
            raise ValueError("effect estimates must be finite")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.y)

    def as_array(self) -> np.ndarray:
        return np.array(self.y)


@dataclass
class REFit:
    upsilon_hat: float
    omega_hat: float
    omega_tilde: float
    upsilon_0: float | None
    flags: set = field(default_factory=set)


def _floored(value, sigma2, flags):
    floor = sigma2 + OMEGA_FLOOR_OFFSET
    if value < floor:
        flags.add(FLOORED)
        return floor
    return value


def re_fit(data: REData, upsilon_0: float | None = None) -> REFit:
    """MLE (mean, mean squared deviation) and the constrained omega at ``upsilon_0``.

    Both variances are floored at ``sigma2 + 1e-12`` so that tau2 >= 0.
    """
    y = data.as_array()
    flags = set()
    ups = float(y.mean())
    if np.all(y == y[0]):
        flags.add(DEGENERATE)
    omega = _floored(float(np.mean((y - ups) ** 2)), data.sigma2, flags)
    omega_t = omega
    if upsilon_0 is not None:
        omega_t = _floored(float(np.mean((y - upsilon_0) ** 2)), data.sigma2, flags)
    return REFit(ups, omega, omega_t, upsilon_0, flags)


def re_loglik(data: REData, upsilon: float, omega: float) -> float:
    y = data.as_array()
    return float(-0.5 * data.n * math.log(2 * math.pi * omega)
                 - 0.5 * np.sum((y - upsilon) ** 2) / omega)


def re_observed_info(data: REData, upsilon: float, omega: float) -> np.ndarray:
    y = data.as_array()
    n = data.n
    dev = y - upsilon
    off = np.sum(dev) / omega ** 2
    return np.array([[n / omega, off],
                     [off, np.sum(dev ** 2) / omega ** 3 - n / (2 * omega ** 2)]])


def re_expected_info(n: int, omega: float) -> np.ndarray:
    return np.diag([n / omega, n / (2 * omega ** 2)])


def re_s_q(n: int, ups_hat: float, omega_hat: float, ups_0: float, omega_tilde: float):
    """Closed-form S (2x2) and q for the parameter order (upsilon, omega)."""
    d = ups_hat - ups_0
    s = np.array([[n / omega_tilde, n * d / omega_tilde ** 2],
                  [0.0, n / (2 * omega_tilde ** 2)]])
    q = np.array([n * d / omega_tilde, -0.5 * n * (1 / omega_hat - 1 / omega_tilde)])
    return s, q


def gaussian_s_q(f_hat, v_hat, df_hat, dv_hat, f_tilde, v_tilde, df_tilde, dv_tilde):
    """S and q for independent Gaussian observations, in any dimension.

    Per study, ``f`` is the mean (m,), ``v`` the covariance (m, m), ``df``
    the mean derivatives (p, m) and ``dv`` the covariance derivatives
    (p, m, m); arguments carry a leading study axis. The covariances are
    those of the score and log-likelihood under the model at the hatted
    point, as quadratic forms in a Gaussian vector.
    """
    f_hat, v_hat, df_hat, dv_hat, f_tilde, v_tilde, df_tilde, dv_tilde = (
        np.asarray(a, dtype=float)
        for a in (f_hat, v_hat, df_hat, dv_hat, f_tilde, v_tilde, df_tilde, dv_tilde))
    p = df_hat.shape[1]
    s = np.zeros((p, p))
    q = np.zeros(p)
    for i in range(f_hat.shape[0]):
        wh = np.linalg.inv(v_hat[i])
        wt = np.linalg.inv(v_tilde[i])
        diff = f_hat[i] - f_tilde[i]
        for j in range(p):
            cj = wh @ dv_hat[i, j]
            q[j] += (-0.5 * np.trace(cj @ (wh - wt) @ v_hat[i])
                     + df_hat[i, j] @ wt @ diff)
            for k in range(p):
                dk = wt @ dv_tilde[i, k] @ wt
                s[j, k] += (0.5 * np.trace(cj @ dk @ v_hat[i])
                            + df_hat[i, j] @ dk @ diff
                            + df_hat[i, j] @ wt @ df_tilde[i, k])
    return s, q


def re_s_q_generic(n: int, ups_hat: float, omega_hat: float, ups_0: float, omega_tilde: float):
    """The general assembly specialised to the scalar model (f = upsilon, V = omega)."""
    def pieces(ups, omega):
        return (np.full((n, 1), ups), np.full((n, 1, 1), omega),
                np.tile([[1.0], [0.0]], (n, 1, 1)),
                np.tile([[[0.0]], [[1.0]]], (n, 1, 1, 1)))

    return gaussian_s_q(*pieces(ups_hat, omega_hat), *pieces(ups_0, omega_tilde))


@dataclass
class REReport:
    upsilon_0: float
    r: float
    r_bar: float
    s: np.ndarray
    q: np.ndarray
    u: float
    fit: REFit
    flags: set


def re_skovgaard(data: REData, upsilon_0: float) -> REReport:
    """Signed likelihood root and Skovgaard statistic for ``upsilon = upsilon_0``."""
    fit = re_fit(data, upsilon_0)
    flags = set(fit.flags)
    n = data.n
    s, q = re_s_q(n, fit.upsilon_hat, fit.omega_hat, upsilon_0, fit.omega_tilde)
    drop = (re_loglik(data, fit.upsilon_hat, fit.omega_hat)
            - re_loglik(data, upsilon_0, fit.omega_tilde))
    r = math.copysign(math.sqrt(2.0 * max(drop, 0.0)), fit.upsilon_hat - upsilon_0)
    if fit.upsilon_hat == upsilon_0:
        r = 0.0
    i_hat = re_expected_info(n, fit.omega_hat)
    det_j = linalg.det(re_observed_info(data, fit.upsilon_hat, fit.omega_hat))
    if not det_j > 0:
        flags.add(INFO_FALLBACK)
        det_j = linalg.det(i_hat)
    jt = re_observed_info(data, upsilon_0, fit.omega_tilde)[1, 1]
    if not jt > 0:
        flags.add(INFO_FALLBACK)
        jt = re_expected_info(n, fit.omega_tilde)[1, 1]
    u = (linalg.solve(s, q)[0] * math.sqrt(det_j) / linalg.det(i_hat)
         * linalg.det(s) / math.sqrt(jt))
    r_bar, guard = skovgaard_rbar(r, u)
    return REReport(float(upsilon_0), r, r_bar, s, q, float(u), fit, flags | guard)
