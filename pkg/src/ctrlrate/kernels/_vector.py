"""Vectorized numpy kernels: the fallback when numba is disabled or absent.

Same signatures and data layout as ``_loops``; every study is processed at
once through stacked (n, 2, 2) arrays instead of an explicit loop.
"""
import math

import numpy as np

from ._nm import nelder_mead

LOG_2PI = math.log(2.0 * math.pi)


def _stack(theta, g):
    b0, b1, mu, t2, s2 = theta
    n = g.shape[0]
    f = np.empty((n, 2))
    f[:, 0] = b0 + b1 * mu
    f[:, 1] = mu
    v = np.empty((n, 2, 2))
    v[:, 0, 0] = g[:, 0] + t2 + b1 * b1 * s2
    v[:, 0, 1] = v[:, 1, 0] = g[:, 1] + b1 * s2
    v[:, 1, 1] = g[:, 2] + s2
    return f, v


def _inv(v):
    det = v[:, 0, 0] * v[:, 1, 1] - v[:, 0, 1] * v[:, 1, 0]
    w = np.empty_like(v)
    w[:, 0, 0] = v[:, 1, 1] / det
    w[:, 1, 1] = v[:, 0, 0] / det
    w[:, 0, 1] = -v[:, 0, 1] / det
    w[:, 1, 0] = -v[:, 1, 0] / det
    return w, det


def _derivs(theta):
    b1, mu, s2 = theta[1], theta[2], theta[4]
    df = np.array([[1.0, 0.0], [mu, 0.0], [b1, 1.0], [0.0, 0.0], [0.0, 0.0]])
    dv = np.zeros((5, 2, 2))
    dv[1] = [[2.0 * b1 * s2, s2], [s2, 0.0]]
    dv[3] = [[1.0, 0.0], [0.0, 0.0]]
    dv[4] = [[b1 * b1, b1], [b1, 1.0]]
    return df, dv


def loglik(theta, y, g):
    if not (theta[3] > 0.0 and theta[4] > 0.0):
        return -np.inf
    f, v = _stack(theta, g)
    w, det = _inv(v)
    if not np.all(det > 0.0):
        return -np.inf
    r = y - f
    quad = np.einsum("ni,nij,nj->n", r, w, r)
    return float(np.sum(-0.5 * np.log(det) - 0.5 * quad) - y.shape[0] * LOG_2PI)


def score(theta, y, g):
    f, v = _stack(theta, g)
    w, _ = _inv(v)
    df, dv = _derivs(theta)
    a = np.einsum("nij,nj->ni", w, y - f)
    trace_term = np.einsum("nij,kji->k", w, dv)
    quad_term = np.einsum("ni,kij,nj->k", a, dv, a)
    mean_term = np.einsum("ki,ni->k", df, a)
    return -0.5 * trace_term + 0.5 * quad_term + mean_term


def expected_info(theta, y, g):
    f, v = _stack(theta, g)
    w, _ = _inv(v)
    df, dv = _derivs(theta)
    p = np.einsum("nij,kjl->nkil", w, dv)
    cov_part = 0.5 * np.einsum("njab,nkba->jk", p, p)
    mean_part = np.einsum("ja,nab,kb->jk", df, w, df)
    return cov_part + mean_part


def s_and_q(theta_hat, theta_tilde, y, g):
    fh, vh = _stack(theta_hat, g)
    ft, vt = _stack(theta_tilde, g)
    wh, _ = _inv(vh)
    wt, _ = _inv(vt)
    dfh, dvh = _derivs(theta_hat)
    dft, dvt = _derivs(theta_tilde)
    d = fh - ft
    c = np.einsum("nab,jbc->njac", wh, dvh)                  # W_hat V_hat,j
    dk = np.einsum("nab,kbc,ncd->nkad", wt, dvt, wt)         # W_t V_t,k W_t
    s = 0.5 * np.einsum("njab,nkbc,nca->jk", c, dk, vh)
    s += np.einsum("ja,nkab,nb->jk", dfh, dk, d)
    s += np.einsum("ja,nab,kb->jk", dfh, wt, dft)
    q = -0.5 * np.einsum("njab,nbc,nca->j", c, wh - wt, vh)
    q += np.einsum("ja,nab,nb->j", dfh, wt, d)
    return s, q


def _negll_free(x, args):
    y, g = args
    return -loglik(x, y, g)


def _negll_fixed(x, args):
    y, g, b1 = args
    return -loglik(np.array([x[0], b1, x[1], x[2], x[3]]), y, g)


def fit_free(start, y, g, maxit, reltol, alpha, bet, gamm, restarts):
    return nelder_mead(_negll_free, start, (y, g), maxit, reltol, alpha, bet, gamm, restarts)


def fit_fixed(start, y, g, beta1, maxit, reltol, alpha, bet, gamm, restarts):
    return nelder_mead(_negll_fixed, start, (y, g, beta1), maxit, reltol, alpha, bet, gamm,
                       restarts)
