"""Hot numeric kernels, dispatched on ``TS2IMG_BACKEND``.

Both implementations stay importable as ``kernels.numpy_impl`` and
``kernels.numba_impl`` (the latter is ``None`` without numba) so tests and the
benchmark can compare them side by side.
"""
from .._backend import BACKEND, HAS_NUMBA
from . import _numpy as numpy_impl

if HAS_NUMBA:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_impl = numba_impl if BACKEND == "numba" else numpy_impl

render_windows = _impl.render_windows
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward

__all__ = [
    "BACKEND",
    "numpy_impl",
    "numba_impl",
    "render_windows",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool_forward",
    "maxpool_backward",
]
