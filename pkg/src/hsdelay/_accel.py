"""Backend selection for the time-stepping kernels.

HSDELAY_BACKEND=numba  use numba (error if it cannot be imported)
HSDELAY_BACKEND=numpy  pure numpy/LAPACK fallback
HSDELAY_BACKEND=auto   numba when importable (default)
"""
from __future__ import annotations

import os

_ENV = "HSDELAY_BACKEND"


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except Exception:
        return False
    return True


def requested_backend() -> str:
    choice = os.environ.get(_ENV, "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV} must be auto, numba or numpy, got {choice!r}")
    return choice


def active_backend() -> str:
    choice = requested_backend()
    if choice == "numpy":
        return "numpy"
    if _numba_available():
        return "numba"
    if choice == "numba":
        raise ImportError(f"{_ENV}=numba but numba cannot be imported")
    return "numpy"


def njit(*args, **kwargs):
    """numba.njit when numba is present, identity decorator otherwise."""
    if _numba_available():
        import numba

        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
