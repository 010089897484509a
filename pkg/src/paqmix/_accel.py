"""Numba switch for the hot kernels.

Set ``PAQMIX_DISABLE_NUMBA=1`` before import to run the pure-numpy path.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_flag = os.environ.get("PAQMIX_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = numba is not None and _flag not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is importable, else return it untouched."""
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)
