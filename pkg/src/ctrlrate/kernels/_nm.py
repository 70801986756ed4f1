"""Nelder-Mead simplex minimizer in the compact form of J. C. Nash.

One source serves both backends. The simplex body calls a module-level
``objective(x, args)``; :func:`bind` makes a copy of the body with that name
bound to a concrete function. Plain Python uses the copy directly and the
numba backend compiles it, which keeps the compiled code cacheable (passing
the objective as an argument would not be). Non-finite objective values are
replaced by ``BIG`` so rejected regions repel the simplex.

Stopping rule and simplex construction follow the classic Nash variant
(also used by R's ``optim``): the initial simplex uses one step of
``0.1 * max|x0|`` along each axis, and the search stops once the spread of
function values is below ``reltol * (|f(x0)| + reltol)``. With ``scaled``
set, each axis instead gets a step proportional to its own coordinate; the
restarts use this, since one shared step is far too coarse for a variance
component sitting next to its zero boundary.
"""
import types

import numpy as np

BIG = 1.0e35

# fail codes
NM_OK = 0
NM_MAXIT = 1
NM_DEGENERATE = 10


def _nm_body(x0, args, maxit, reltol, alpha, bet, gamm, scaled):
    n = x0.shape[0]
    n1 = n + 1
    c = n + 1  # column holding the centroid
    p = np.zeros((n + 1, n + 2))
    bvec = x0.copy()

    f = objective(bvec, args)
    if not np.isfinite(f):
        return bvec, np.inf, -1, 1
    funcount = 1
    convtol = reltol * (abs(f) + reltol)
    p[n, 0] = f
    for i in range(n):
        p[i, 0] = bvec[i]

    step = 0.0
    for i in range(n):
        if 0.1 * abs(bvec[i]) > step:
            step = 0.1 * abs(bvec[i])
    if step == 0.0:
        step = 0.1
    size = 0.0
    for j in range(1, n1):
        for i in range(n):
            p[i, j] = bvec[i]
        trystep = step
        if scaled:
            # per-axis steps: 5% of the coordinate, 2.5e-4 for zero coordinates
            trystep = 0.05 * abs(bvec[j - 1]) if bvec[j - 1] != 0.0 else 0.00025
        while p[j - 1, j] == bvec[j - 1]:
            p[j - 1, j] = bvec[j - 1] + trystep
            trystep *= 10.0
        size += trystep
    oldsize = size

    lo = 0
    fail = NM_OK
    calcvert = True
    while True:
        if calcvert:
            for j in range(n1):
                if j != lo:
                    for i in range(n):
                        bvec[i] = p[i, j]
                    f = objective(bvec, args)
                    if not np.isfinite(f):
                        f = BIG
                    funcount += 1
                    p[n, j] = f
            calcvert = False

        vl = p[n, lo]
        vh = vl
        hi = lo
        for j in range(n1):
            if j != lo:
                f = p[n, j]
                if f < vl:
                    lo = j
                    vl = f
                if f > vh:
                    hi = j
                    vh = f

        if vh <= vl + convtol:
            break

        for i in range(n):
            temp = -p[i, hi]
            for j in range(n1):
                temp += p[i, j]
            p[i, c] = temp / n
        for i in range(n):
            bvec[i] = (1.0 + alpha) * p[i, c] - alpha * p[i, hi]
        f = objective(bvec, args)
        if not np.isfinite(f):
            f = BIG
        funcount += 1
        vr = f

        if vr < vl:
            # try expanding past the reflected point
            p[n, c] = f
            for i in range(n):
                f = gamm * bvec[i] + (1.0 - gamm) * p[i, c]
                p[i, c] = bvec[i]
                bvec[i] = f
            f = objective(bvec, args)
            if not np.isfinite(f):
                f = BIG
            funcount += 1
            if f < vr:
                for i in range(n):
                    p[i, hi] = bvec[i]
                p[n, hi] = f
            else:
                for i in range(n):
                    p[i, hi] = p[i, c]
                p[n, hi] = vr
        else:
            if vr < vh:
                for i in range(n):
                    p[i, hi] = bvec[i]
                p[n, hi] = vr
            for i in range(n):
                bvec[i] = (1.0 - bet) * p[i, hi] + bet * p[i, c]
            f = objective(bvec, args)
            if not np.isfinite(f):
                f = BIG
            funcount += 1
            if f < p[n, hi]:
                for i in range(n):
                    p[i, hi] = bvec[i]
                p[n, hi] = f
            elif vr >= vh:
                # shrink toward the best vertex
                calcvert = True
                size = 0.0
                for j in range(n1):
                    if j != lo:
                        for i in range(n):
                            p[i, j] = bet * (p[i, j] - p[i, lo]) + p[i, lo]
                            size += abs(p[i, j] - p[i, lo])
                if size < oldsize:
                    oldsize = size
                else:
                    fail = NM_DEGENERATE
                    break
        if funcount > maxit:
            break

    if funcount > maxit:
        fail = NM_MAXIT
    xbest = np.empty(n)
    for i in range(n):
        xbest[i] = p[i, lo]
    return xbest, p[n, lo], fail, funcount


def _restarts_body(x0, args, maxit, reltol, alpha, bet, gamm, restarts):
    # runs the bound simplex ``core`` and re-seeds it at the incumbent
    x, fmin, fail, count = core(x0, args, maxit, reltol, alpha, bet, gamm, False)
    total = count
    for _ in range(restarts):
        if fail < 0:
            break
        x2, f2, fail2, count2 = core(x, args, maxit, reltol, alpha, bet, gamm, True)
        total += count2
        if f2 <= fmin:
            gain = fmin - f2
            x = x2
            fmin = f2
            fail = fail2
            if gain <= reltol * (abs(fmin) + reltol):
                break
    return x, fmin, fail, total


def bind(body, name, **names):
    """Copy of ``body`` whose module globals gain ``names``, renamed ``name``."""
    fn = types.FunctionType(body.__code__, {**globals(), **names}, name)
    fn.__qualname__ = name
    return fn


def nelder_mead(objective, x0, args, maxit, reltol, alpha, bet, gamm, restarts):
    """Minimize ``objective(x, args)`` from ``x0``; returns ``(x, fmin, fail, evaluations)``."""
    core = bind(_nm_body, "nm_core", objective=objective)
    run = bind(_restarts_body, "nm_restarts", core=core)
    return run(x0, args, maxit, reltol, alpha, bet, gamm, restarts)
