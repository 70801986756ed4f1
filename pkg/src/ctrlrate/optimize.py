"""Derivative-free maximization by the Nelder-Mead simplex method."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import _nm
from .kernels._nm import NM_DEGENERATE, NM_MAXIT, NM_OK

# Square root of double-precision machine epsilon.
DEFAULT_RELTOL = float(np.sqrt(np.finfo(float).eps))


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    """Nelder-Mead settings.

    ``max_iterations`` bounds objective evaluations per simplex run.
    ``restarts`` re-seeds a fresh simplex at the incumbent after a run ends.
    The defaults reproduce the classic compact implementation (R's ``optim``).
    :meth:`tight` converges much further at similar cost and is the default
    for simulations; :meth:`precise` is for when the optimum itself is the
    object of interest.
    """
    max_iterations: int = 1000
    relative_tolerance: float = DEFAULT_RELTOL
    reflection: float = 1.0
    contraction: float = 0.5
    expansion: float = 2.0
    restarts: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.reflection, self.contraction, self.expansion) <= 0:
            raise ValueError("simplex coefficients must be positive")
        if self.relative_tolerance < 0 or self.restarts < 0:
            raise ValueError("relative_tolerance and restarts must be nonnegative")

    @classmethod
    def tight(cls, **overrides) -> "OptimizerConfig":
        opts = dict(relative_tolerance=1e-10, restarts=2)
        opts.update(overrides)
        return cls(**opts)

    @classmethod
    def precise(cls, **overrides) -> "OptimizerConfig":
        opts = dict(max_iterations=20000, relative_tolerance=1e-12, restarts=2)
        opts.update(overrides)
        return cls(**opts)

    def kernel_args(self):
        return (int(self.max_iterations), float(self.relative_tolerance),
                float(self.reflection), float(self.contraction), float(self.expansion),
                int(self.restarts))


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    value: float
    converged: bool
    evaluations: int
    status: str


STATUS = {NM_OK: "converged", NM_MAXIT: "iteration cap reached",
          NM_DEGENERATE: "simplex failed to shrink"}


def nelder_mead(objective, start, config: OptimizerConfig | None = None) -> NelderMeadResult:
    """Maximize ``objective`` starting from ``start``.

    Points where the objective is not finite (e.g. ``-inf`` for invalid
    parameters) are treated as infinitely bad and never returned.
    """
    config = config or OptimizerConfig()
    x0 = np.array(start, dtype=float)
    if not np.isfinite(objective(x0.copy())):
        raise OptimizationError("objective is not finite at the starting point")

    def neg(x, _args):
        return -float(objective(x.copy()))

    maxit, reltol, alpha, bet, gamm, restarts = config.kernel_args()
    x, fmin, fail, count = _nm.nelder_mead(neg, x0, None, maxit, reltol, alpha, bet, gamm, restarts)
    return NelderMeadResult(x=np.asarray(x), value=-fmin, converged=fail == NM_OK,
                            evaluations=int(count), status=STATUS.get(fail, "failed"))
