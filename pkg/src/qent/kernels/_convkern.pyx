# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled im2col / col2im kernels (single- and double-precision).

Column layout is (N*OH*OW, C*kh*kw): patch rows are contiguous per sample,
so both the copy and the following GEMM stay cache-local.
"""

import numpy as np

cimport cython

ctypedef fused real_t:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
def im2col(const real_t[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t sh, Py_ssize_t sw):
    """(N, C, H, W) -> (N*OH*OW, C*kh*kw) patch matrix. Input must be padded."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - kh) // sh + 1
    cdef Py_ssize_t ow = (w - kw) // sw + 1
    if real_t is float:
        out_np = np.empty((n * oh * ow, c * kh * kw), dtype=np.float32)
    else:
        out_np = np.empty((n * oh * ow, c * kh * kw), dtype=np.float64)
    cdef real_t[:, ::1] out = out_np
    cdef Py_ssize_t i, ci, a, b, p, q, row, col
    for i in range(n):
        for p in range(oh):
            for q in range(ow):
                row = (i * oh + p) * ow + q
                for ci in range(c):
                    for a in range(kh):
                        col = (ci * kh + a) * kw
                        for b in range(kw):
                            out[row, col + b] = x[i, ci, p * sh + a, q * sw + b]
    return out_np


@cython.boundscheck(False)
@cython.wraparound(False)
def col2im(const real_t[:, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h,
           Py_ssize_t w, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh,
           Py_ssize_t sw):
    """Adjoint of im2col: scatter-add (N*OH*OW, C*kh*kw) back to (N, C, H, W)."""
    cdef Py_ssize_t oh = (h - kh) // sh + 1
    cdef Py_ssize_t ow = (w - kw) // sw + 1
    if real_t is float:
        out_np = np.zeros((n, c, h, w), dtype=np.float32)
    else:
        out_np = np.zeros((n, c, h, w), dtype=np.float64)
    cdef real_t[:, :, :, ::1] out = out_np
    cdef Py_ssize_t i, ci, a, b, p, q, row, col
    for i in range(n):
        for p in range(oh):
            for q in range(ow):
                row = (i * oh + p) * ow + q
                for ci in range(c):
                    for a in range(kh):
                        col = (ci * kh + a) * kw
                        for b in range(kw):
                            out[i, ci, p * sh + a, q * sw + b] += cols[row, col + b]
    return out_np
