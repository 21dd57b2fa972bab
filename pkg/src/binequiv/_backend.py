"""Kernel backend selection.

Hot loops (the Metropolis chain, pointwise log-likelihood matrices) exist
twice: a numba ``@njit`` version and a pure-numpy version. The backend is
picked from the ``BINEQUIV_BACKEND`` environment variable (``numba`` or
``numpy``) at import time and can be switched at runtime with
:func:`set_backend`. Without numba installed the numpy path is used.
"""

from __future__ import annotations

import os
import warnings

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_VALID = ("numba", "numpy")


def _initial() -> str:
    name = os.environ.get("BINEQUIV_BACKEND", "numba").strip().lower()
    if name not in _VALID:
        warnings.warn(f"unknown BINEQUIV_BACKEND={name!r}; using numpy", stacklevel=2)
        return "numpy"
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


_current = _initial()


def get_backend() -> str:
    return _current


def set_backend(name: str) -> str:
    """Switch the active backend and return the previous one."""
    global _current
    name = name.lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _current = _current, name
    return prev
