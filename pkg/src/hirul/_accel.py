"""Optional numba acceleration.

Set ``HIRUL_DISABLE_NUMBA=1`` before importing :mod:`hirul` to force the
pure-numpy code paths (useful for debugging and for platforms without numba).
"""

import os

DISABLE_NUMBA = os.environ.get("HIRUL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if DISABLE_NUMBA:
        raise ImportError("numba disabled by HIRUL_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """No-op stand-in for :func:`numba.njit`."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap
