"""Numba detection and backend selection.

Set ``SEQBPS_DISABLE_NUMBA=1`` in the environment to force the pure-numpy
kernels. The choice can also be flipped at runtime with :func:`set_backend`.
"""

from __future__ import annotations

import os

try:
    import numba
    from numba import njit, prange

    # prefer layers that need no extra system library
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator

    def prange(*args):
        return range(*args)


def _env_disabled() -> bool:
    return os.environ.get("SEQBPS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numba" if (NUMBA_AVAILABLE and not _env_disabled()) else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"`` kernels; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not importable")
    previous, _backend = _backend, name
    return previous


def set_threads(n: int | None) -> None:
    """Size numba's worker pool; a no-op for the numpy backend."""
    if n is None or numba is None:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
