"""Optional numba acceleration.

Set ``EGAE_NO_JIT=1`` to force the pure-numpy kernels even when numba is
importable. The flag is read once, at import time.
"""
import os

_DISABLED = os.environ.get("EGAE_NO_JIT", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED

# serial kernels only: results must be bit-stable regardless of core count
_OPTS = dict(cache=True, nogil=True, fastmath=False)


def njit(fn):
    """Compile ``fn`` with numba if it is installed, else return it unchanged.

    Compilation is lazy. Callers pick between the compiled loop kernel and
    its numpy twin through ``USE_NUMBA``; the loop version stays importable
    as plain Python so the two can be compared without numba.
    """
    if not HAVE_NUMBA:
        return fn
    return _numba.njit(**_OPTS)(fn)
