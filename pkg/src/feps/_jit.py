"""Backend switch for the hot kernels.

``FEPS_BACKEND=numpy`` forces the pure numpy/Python path even when numba is
importable; anything else (default ``numba``) compiles kernels with ``@njit``.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA and os.environ.get("FEPS_BACKEND", "numba").lower() != "numpy" else "numpy"
USE_NUMBA = BACKEND == "numba"


def kernel(fn=None, *, inline: bool = False):
    """``@njit(cache=True)`` under the numba backend, identity otherwise.

    ``inline=True`` asks numba to inline the function at numba call sites.
    """
    def wrap(f):
        if USE_NUMBA:
            opts = {"inline": "always"} if inline else {}
            return numba.njit(cache=True, nogil=True, **opts)(f)
        return f

    return wrap(fn) if fn is not None else wrap


def jit_always(fn):
    """Compile regardless of backend (used for side-by-side benchmarks)."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
