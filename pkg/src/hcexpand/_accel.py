"""Numba switch for the hot assembly kernels.

Set ``HCEXPAND_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The flag is
read once at import time; tests that compare both paths call the private
implementations directly.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
    # the bundled TBB is too old for numba; try OpenMP before it to avoid a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("HCEXPAND_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

_NJIT_KWARGS = {"cache": True, "nogil": True}


def njit(*args, **kwargs):
    """``numba.njit`` with the package defaults, or an identity decorator."""
    opts = dict(_NJIT_KWARGS)
    opts.update(kwargs)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    if args and callable(args[0]):
        return numba.njit(**opts)(args[0])
    return numba.njit(**opts)


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n):
    """Set the numba thread count (no-op without numba). Returns the effective count."""
    if not HAVE_NUMBA or n is None:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def backend():
    return "numba" if USE_NUMBA else "numpy"
