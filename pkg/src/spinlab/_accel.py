"""Backend switch for the hot loops.

Kernels are written once as plain Python over numpy arrays. When numba is
importable and ``SPINLAB_DISABLE_NUMBA`` is not set to a truthy value they are
compiled with ``njit``; otherwise the same functions run as interpreted
Python. Both paths consume identical pre-drawn uniforms, so results agree
bit for bit.
"""

import os

_FLAG = os.environ.get("SPINLAB_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")
BACKEND = "numba" if USE_NUMBA else "python"


def jit(fn):
    """Compile ``fn`` in nopython mode if the numba backend is active."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
