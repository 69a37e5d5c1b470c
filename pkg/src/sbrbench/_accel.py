"""Switch between numba-compiled kernels and their pure-numpy twins.

Set ``SBRBENCH_DISABLE_NUMBA=1`` before import to force the numpy path.
Both variants are always defined so tests and benchmarks can compare them.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_DISABLED = os.environ.get("SBRBENCH_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """``numba.njit`` with caching and GIL release; identity without numba."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)
