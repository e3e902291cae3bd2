"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba implementations are used when numba imports cleanly and the
environment variable ``MMLOOP_DISABLE_NUMBA`` is unset (or set to a false
value such as ``0``). Both paths stay importable as ``numpy_impl`` and
``numba_impl`` so tests and the benchmark can compare them directly.
"""

import os

from . import _numpy as numpy_impl

_FALSY = {"", "0", "false", "no", "off"}

try:
    from . import _numba as numba_impl
except ImportError:  # numba missing or broken
    numba_impl = None

DISABLED_BY_ENV = os.environ.get("MMLOOP_DISABLE_NUMBA", "").strip().lower() not in _FALSY
USE_NUMBA = numba_impl is not None and not DISABLED_BY_ENV
BACKEND = "numba" if USE_NUMBA else "numpy"

_impl = numba_impl if USE_NUMBA else numpy_impl

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
scatter_max = _impl.scatter_max
bilinear_resize = _impl.bilinear_resize
# the numpy screen rides on BLAS and beats the numba loop (benchmarks/)
nearest_rows = numpy_impl.nearest_rows
greedy_places = _impl.greedy_places
conv_out_size = numpy_impl.conv_out_size

__all__ = [
    "BACKEND", "USE_NUMBA", "numpy_impl", "numba_impl",
    "im2col", "col2im", "maxpool_forward", "maxpool_backward", "scatter_max",
    "bilinear_resize", "nearest_rows", "greedy_places", "conv_out_size",
]
