"""Kernel backend selection.

The hot loops (pixel writes, convolution, max pooling) exist twice: a numba
``@njit`` version and a pure-numpy version. ``TS2IMG_BACKEND`` picks one at
import time::

    TS2IMG_BACKEND=numpy  pytest      # force the fallback
    TS2IMG_BACKEND=numba  pytest      # default when numba imports

Both backends are deterministic on their own. They are not bit-identical to
each other because floating point reductions run in different orders.
"""
import logging
import os

log = logging.getLogger(__name__)

ENV_VAR = "TS2IMG_BACKEND"

try:
    import numba  # noqa: F401
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _resolve():
    requested = os.environ.get(ENV_VAR, "").strip().lower()
    if requested in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if requested not in ("numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not HAS_NUMBA:
        log.warning("numba requested but not importable; using numpy kernels")
        return "numpy"
    return requested


BACKEND = _resolve()
