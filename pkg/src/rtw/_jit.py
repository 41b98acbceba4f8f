"""Switch between numba-compiled kernels and their pure-numpy twins.

Set ``RTW_DISABLE_NUMBA=1`` before import to force the numpy path everywhere.
Both implementations of every kernel stay importable so they can be checked
against each other and benchmarked.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("RTW_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")


def njit(func):
    """Compile ``func`` in nopython mode when numba is present, else return it untouched."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)


def select(jit_impl, numpy_impl):
    return jit_impl if USE_NUMBA else numpy_impl
