"""Pure-NumPy im2col / col2im, used when the compiled extension is unavailable.

Same (N*OH*OW, C*kh*kw) column layout as the compiled backend.
"""

import numpy as np


def im2col(x, kh, kw, sh, sw):
    """(N, C, H, W) -> (N*OH*OW, C*kh*kw) patch matrix. Input must be padded."""
    n, c, h, w = x.shape
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    s0, s1, s2, s3 = x.strides
    patches = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, oh, ow, c, kh, kw),
        strides=(s0, s2 * sh, s3 * sw, s1, s2, s3),
        writeable=False,
    )
    return np.ascontiguousarray(patches).reshape(n * oh * ow, c * kh * kw)


def col2im(cols, n, c, h, w, kh, kw, sh, sw):
    """Adjoint of im2col: scatter-add (N*OH*OW, C*kh*kw) back to (N, C, H, W)."""
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    cols6 = cols.reshape(n, oh, ow, c, kh, kw)
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    for a in range(kh):
        for b in range(kw):
            out[:, :, a : a + sh * oh : sh, b : b + sw * ow : sw] += cols6[
                :, :, :, :, a, b
            ].transpose(0, 3, 1, 2)
    return out
