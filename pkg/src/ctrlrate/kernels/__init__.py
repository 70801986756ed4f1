"""Backend selection for the hot numeric kernels.

``USE_NUMBA`` (driven by the ``CTRLRATE_JIT`` environment variable) picks the
compiled loop kernels; otherwise the vectorized numpy kernels are used. Both
modules expose the same functions and can be imported directly for
cross-checks and benchmarks.
"""
from .._accel import USE_NUMBA
from . import _loops, _vector

backend = _loops if USE_NUMBA else _vector
BACKEND_NAME = "numba" if USE_NUMBA else "numpy"

loglik = backend.loglik
score = backend.score
expected_info = backend.expected_info
s_and_q = backend.s_and_q
fit_free = backend.fit_free
fit_fixed = backend.fit_fixed

__all__ = ["BACKEND_NAME", "backend", "loglik", "score", "expected_info", "s_and_q",
           "fit_free", "fit_fixed"]
