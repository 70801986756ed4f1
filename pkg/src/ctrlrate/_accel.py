"""JIT switch for the numeric kernels.

Set ``CTRLRATE_JIT=0`` in the environment before import to force the
pure-numpy path. With numba missing the numpy path is used regardless.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def _flag_enabled(value):
    return value.strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and _flag_enabled(os.environ.get("CTRLRATE_JIT", "1"))


def njit_opts():
    return dict(cache=True, nogil=True, fastmath=False, error_model="numpy")


def maybe_njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(**njit_opts())(func)

