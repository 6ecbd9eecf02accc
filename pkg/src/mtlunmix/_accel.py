"""Numba switch.

Set ``MTLUNMIX_DISABLE_NUMBA=1`` to route every hot kernel through its
pure-numpy implementation. Numba missing from the environment has the same
effect.
"""
import os

_FLAG = os.environ.get("MTLUNMIX_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit_opts():
    # fastmath is off on purpose: the numpy and numba paths must agree to
    # rounding, and IEEE semantics keep sign()/comparisons exact.
    return dict(cache=True, nogil=True, fastmath=False, error_model="numpy")


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it as-is."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(**njit_opts())(fn)

