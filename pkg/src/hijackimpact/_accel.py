"""Backend selection for the hot kernels.

``HIJACKIMPACT_BACKEND=numpy`` forces the pure-numpy code paths; anything
else (or unset) uses numba when it imports cleanly.
"""

from __future__ import annotations

import os

BACKEND_ENV = "HIJACKIMPACT_BACKEND"

try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAVE_NUMBA = False


def requested_backend() -> str:
    want = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAVE_NUMBA:
        return "numpy"
    return want


def njit(func=None, **kwargs):
    """``numba.njit`` with this package's defaults; identity when numba is missing."""
    opts = {"cache": True, "nogil": True}
    opts.update(kwargs)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return _numba.njit(**opts)(f)

    return wrap(func) if func is not None else wrap
