"""Kernel backend selection.

Hot loops exist twice: a numba ``@njit`` kernel and a vectorised numpy
version. Both must produce the same results. The backend is picked once at
import time from the ``CURL_CODEC_NUMBA`` environment variable:

* unset / ``1`` / ``auto``: numba when importable, numpy otherwise
* ``0`` / ``off`` / ``false``: always numpy

``set_backend`` switches at runtime, which the benchmark and the
equivalence tests use.
"""
from __future__ import annotations

import os

try:
    import numba
    HAVE_NUMBA = True
    # an old system TBB only produces a warning before numba falls back anyway
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_OFF = {"0", "off", "false", "no", "numpy"}


def _initial_backend() -> str:
    flag = os.environ.get("CURL_CODEC_NUMBA", "auto").strip().lower()
    if flag in _OFF or not HAVE_NUMBA:
        return "numpy"
    return "numba"


_backend = _initial_backend()


def backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def set_threads(n: int) -> None:
    """Bound numba worker threads. Outputs never depend on ``n``."""
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


prange = numba.prange if HAVE_NUMBA else range
