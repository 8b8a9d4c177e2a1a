"""Conv kernel backend selection.

The compiled extension is preferred when importable; the pure-numpy
fallback is always available. `SVLA_FORCE_NUMPY_KERNELS=1` pins the
fallback (used by the benchmark and for debugging).
"""
import os

from . import numpy_backend

if os.environ.get("SVLA_FORCE_NUMPY_KERNELS"):
    _backend = numpy_backend
else:
    try:
        from . import _convops as _backend
    except ImportError:
        _backend = numpy_backend

BACKEND_NAME = _backend.NAME
im2col = _backend.im2col
col2im = _backend.col2im
conv_out_size = numpy_backend.conv_out_size
