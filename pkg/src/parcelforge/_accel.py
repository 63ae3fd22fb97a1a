"""Numba switch.

Hot loops have two implementations: a compiled one (numba ``@njit``) and a
vectorised numpy/scipy one.  The compiled path is used when numba imports and
``PARCELFORGE_DISABLE_NUMBA`` is unset or ``0``.
"""

from __future__ import annotations

import os

_FLAG = "PARCELFORGE_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the tbb layer probes the installed TBB version and warns when it is old
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]):
        return args[0]

    def _wrap(f):
        return f

    return _wrap


def set_workers(n: int) -> None:
    if HAVE_NUMBA and n and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
