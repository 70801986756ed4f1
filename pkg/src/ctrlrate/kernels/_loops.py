"""Per-study loop kernels, compiled with numba when it is available.

Data layout shared by every kernel:

* ``theta``: float64[5] in the order (beta0, beta1, mu, tau2, sigma2)
* ``y``: float64[n, 2] observed (eta_hat, xi_hat)
* ``g``: float64[n, 3] within-study covariance entries (g11, g12, g22)

2x2 matrices are passed around as row-major 4-tuples.
"""
import math

import numpy as np

from .._accel import maybe_njit
from ._nm import _nm_body, _restarts_body, bind

LOG_2PI = math.log(2.0 * math.pi)


@maybe_njit
def _mm(a, b):
    return (a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3])


@maybe_njit
def _tr(a):
    return a[0] + a[3]


@maybe_njit
def _tr_mm(a, b):
    return a[0] * b[0] + a[1] * b[2] + a[2] * b[1] + a[3] * b[3]


@maybe_njit
def _mv(a, v0, v1):
    return a[0] * v0 + a[1] * v1, a[2] * v0 + a[3] * v1


@maybe_njit
def _moments(theta, g, i):
    b0 = theta[0]
    b1 = theta[1]
    mu = theta[2]
    t2 = theta[3]
    s2 = theta[4]
    v11 = g[i, 0] + t2 + b1 * b1 * s2
    v12 = g[i, 1] + b1 * s2
    v22 = g[i, 2] + s2
    return b0 + b1 * mu, mu, (v11, v12, v12, v22)


@maybe_njit
def _inv(v):
    det = v[0] * v[3] - v[1] * v[2]
    return (v[3] / det, -v[1] / det, -v[2] / det, v[0] / det), det


@maybe_njit
def _dmean(k, theta):
    if k == 0:
        return 1.0, 0.0
    if k == 1:
        return theta[2], 0.0
    if k == 2:
        return theta[1], 1.0
    return 0.0, 0.0


@maybe_njit
def _dcov(k, theta):
    b1 = theta[1]
    s2 = theta[4]
    if k == 1:
        return (2.0 * b1 * s2, s2, s2, 0.0)
    if k == 3:
        return (1.0, 0.0, 0.0, 0.0)
    if k == 4:
        return (b1 * b1, b1, b1, 1.0)
    return (0.0, 0.0, 0.0, 0.0)


@maybe_njit
def loglik(theta, y, g):
    if not (theta[3] > 0.0 and theta[4] > 0.0):
        return -np.inf
    total = 0.0
    for i in range(y.shape[0]):
        f1, f2, v = _moments(theta, g, i)
        det = v[0] * v[3] - v[1] * v[2]
        if not det > 0.0:
            return -np.inf
        r1 = y[i, 0] - f1
        r2 = y[i, 1] - f2
        quad = (v[3] * r1 * r1 - 2.0 * v[1] * r1 * r2 + v[0] * r2 * r2) / det
        total += -0.5 * math.log(det) - 0.5 * quad - LOG_2PI
    return total


@maybe_njit
def score(theta, y, g):
    out = np.zeros(5)
    for i in range(y.shape[0]):
        f1, f2, v = _moments(theta, g, i)
        w, det = _inv(v)
        a1, a2 = _mv(w, y[i, 0] - f1, y[i, 1] - f2)
        for k in range(5):
            dv = _dcov(k, theta)
            df1, df2 = _dmean(k, theta)
            out[k] += (-0.5 * _tr_mm(w, dv)
                       + 0.5 * (dv[0] * a1 * a1 + 2.0 * dv[1] * a1 * a2 + dv[3] * a2 * a2)
                       + df1 * a1 + df2 * a2)
    return out


@maybe_njit
def expected_info(theta, y, g):
    out = np.zeros((5, 5))
    for i in range(y.shape[0]):
        f1, f2, v = _moments(theta, g, i)
        w, det = _inv(v)
        for j in range(5):
            pj = _mm(w, _dcov(j, theta))
            dfj1, dfj2 = _dmean(j, theta)
            wf1, wf2 = _mv(w, dfj1, dfj2)
            for k in range(j, 5):
                pk = _mm(w, _dcov(k, theta))
                dfk1, dfk2 = _dmean(k, theta)
                val = 0.5 * _tr_mm(pj, pk) + wf1 * dfk1 + wf2 * dfk2
                out[j, k] += val
                if k != j:
                    out[k, j] += val
    return out


@maybe_njit
def s_and_q(theta_hat, theta_tilde, y, g):
    s = np.zeros((5, 5))
    q = np.zeros(5)
    for i in range(y.shape[0]):
        fh1, fh2, vh = _moments(theta_hat, g, i)
        ft1, ft2, vt = _moments(theta_tilde, g, i)
        wh, dh = _inv(vh)
        wt, dt = _inv(vt)
        d1 = fh1 - ft1
        d2 = fh2 - ft2
        wdiff = (wh[0] - wt[0], wh[1] - wt[1], wh[2] - wt[2], wh[3] - wt[3])
        wt_d1, wt_d2 = _mv(wt, d1, d2)
        for j in range(5):
            cj = _mm(wh, _dcov(j, theta_hat))
            fj1, fj2 = _dmean(j, theta_hat)
            q[j] += -0.5 * _tr_mm(_mm(cj, wdiff), vh) + fj1 * wt_d1 + fj2 * wt_d2
            for k in range(5):
                dk = _mm(_mm(wt, _dcov(k, theta_tilde)), wt)
                fk1, fk2 = _dmean(k, theta_tilde)
                dd1, dd2 = _mv(dk, d1, d2)
                wf1, wf2 = _mv(wt, fk1, fk2)
                s[j, k] += (0.5 * _tr_mm(_mm(cj, dk), vh)
                            + fj1 * dd1 + fj2 * dd2
                            + fj1 * wf1 + fj2 * wf2)
    return s, q


@maybe_njit
def _negll_free(x, args):
    y, g = args
    return -loglik(x, y, g)


@maybe_njit
def _negll_fixed(x, args):
    y, g, b1 = args
    theta = np.empty(5)
    theta[0] = x[0]
    theta[1] = b1
    theta[2] = x[1]
    theta[3] = x[2]
    theta[4] = x[3]
    return -loglik(theta, y, g)


_core_free = maybe_njit(bind(_nm_body, "nm_core_free", objective=_negll_free))
_core_fixed = maybe_njit(bind(_nm_body, "nm_core_fixed", objective=_negll_fixed))
_run_free = maybe_njit(bind(_restarts_body, "nm_restarts_free", core=_core_free))
_run_fixed = maybe_njit(bind(_restarts_body, "nm_restarts_fixed", core=_core_fixed))


@maybe_njit
def fit_free(start, y, g, maxit, reltol, alpha, bet, gamm, restarts):
    return _run_free(start, (y, g), maxit, reltol, alpha, bet, gamm, restarts)


@maybe_njit
def fit_fixed(start, y, g, beta1, maxit, reltol, alpha, bet, gamm, restarts):
    return _run_fixed(start, (y, g, beta1), maxit, reltol, alpha, bet, gamm, restarts)
