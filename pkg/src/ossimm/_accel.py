"""Backend selection for the hot kernels.

Every kernel in :mod:`ossimm.kernels` exists twice: a numba ``@njit`` loop
version and a vectorized numpy version. The numba path is used when numba
imports and ``OSSIMM_DISABLE_NUMBA`` is not set to a truthy value.
"""

from __future__ import annotations

import os

_TRUTHY = {"1", "true", "yes", "on"}

try:  # pragma: no cover - exercised implicitly
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAVE_NUMBA = False


def numba_disabled() -> bool:
    return os.environ.get("OSSIMM_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


def default_backend() -> str:
    """'numba' or 'numpy', re-read from the environment on every call."""
    if HAVE_NUMBA and not numba_disabled():
        return "numba"
    return "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap
