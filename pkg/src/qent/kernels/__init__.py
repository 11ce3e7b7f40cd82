"""Hot convolution kernels with backend selection at import time.

The compiled Cython extension is preferred; a pure-NumPy implementation is
the fallback. Set QENT_KERNELS=numpy (or =compiled) to force a backend.
Both backends accept C-contiguous float32/float64 arrays and agree up to
floating-point summation order; see benchmarks/bench_kernels.py.
"""

import os

import numpy as np

from . import numpy_backend

_requested = os.environ.get("QENT_KERNELS", "").strip().lower()

if _requested == "numpy":
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _convkern as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "QENT_KERNELS=compiled but the qent.kernels._convkern extension "
                "is not built; reinstall with the Cython extension or unset the variable"
            )
        _impl = numpy_backend
        BACKEND = "numpy"


def _as_kernel_array(x):
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"kernels support float32/float64 only, got {x.dtype}")
    return np.ascontiguousarray(x)


def im2col(x, kh, kw, sh, sw):
    """Extract sliding patches: (N, C, H, W) -> (N*OH*OW, C*kh*kw)."""
    return _impl.im2col(_as_kernel_array(x), kh, kw, sh, sw)


def col2im(cols, n, c, h, w, kh, kw, sh, sw):
    """Adjoint of im2col: (N*OH*OW, C*kh*kw) -> (N, C, H, W) by scatter-add."""
    return _impl.col2im(_as_kernel_array(cols), n, c, h, w, kh, kw, sh, sw)
