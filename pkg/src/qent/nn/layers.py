"""Layer forward passes with hand-written backward closures.

Convolutions run through the im2col/col2im kernels (compiled or NumPy,
selected in qent.kernels). All layers preserve the input dtype, so a graph
built from float64 leaves runs entirely in double precision.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .. import kernels
from ..errors import BatchTooSmallError, ShapeMismatchError
from .tensor import Tensor, _make, _send

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size, kernel, stride, padding, output_padding):
    return (size - 1) * stride - 2 * padding + kernel + output_padding


def conv2d(x, weight, bias, stride=1, padding=0):
    """Cross-correlation of (N, C, H, W) with weight (F, C, kh, kw)."""
    if x.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects rank-4 input, got shape {x.shape}")
    n, c, h, w = x.shape
    f, c2, kh, kw = weight.shape
    if c != c2:
        raise ShapeMismatchError(f"conv2d channel mismatch: input {c}, weight {c2}")
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeMismatchError(f"conv2d output would be empty for input {x.shape}")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    hp, wp = xp.shape[2], xp.shape[3]
    cols = kernels.im2col(xp, kh, kw, stride, stride)  # (N*L, C*kh*kw)
    w2 = weight.data.reshape(f, c * kh * kw)
    out_mat = cols @ w2.T
    out_mat += bias.data
    out = out_mat.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
        _send(bias, gm.sum(axis=0))
        _send(weight, (gm.T @ cols).reshape(weight.shape))
        dxp = kernels.col2im(gm @ w2, n, c, hp, wp, kh, kw, stride, stride)
        if padding:
            dxp = dxp[:, :, padding : padding + h, padding : padding + w]
        _send(x, dxp)

    return _make(out, (x, weight, bias), backward)


def conv_transpose2d(x, weight, bias, stride=1, padding=0, output_padding=0):
    """Adjoint of conv2d: input (N, Cin, H, W), weight (Cin, Cout, kh, kw)."""
    if x.ndim != 4:
        raise ShapeMismatchError(f"conv_transpose2d expects rank-4 input, got shape {x.shape}")
    n, cin, h, w = x.shape
    cin2, cout, kh, kw = weight.shape
    if cin != cin2:
        raise ShapeMismatchError(f"conv_transpose2d channel mismatch: input {cin}, weight {cin2}")
    oh = conv_transpose_output_size(h, kh, stride, padding, output_padding)
    ow = conv_transpose_output_size(w, kw, stride, padding, output_padding)
    if oh < 1 or ow < 1:
        raise ShapeMismatchError(f"conv_transpose2d output would be empty for input {x.shape}")
    hfull = (h - 1) * stride + kh
    wfull = (w - 1) * stride + kw

    w2 = weight.data.reshape(cin, cout * kh * kw)
    xm = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, cin)
    cols = xm @ w2  # (N*H*W, Cout*kh*kw)
    big = kernels.col2im(cols, n, cout, hfull, wfull, kh, kw, stride, stride)
    # output_padding extends the canvas before the padding crop, matching the
    # adjoint of conv2d on an input of the target size.
    if output_padding:
        ext = np.zeros((n, cout, hfull + output_padding, wfull + output_padding), dtype=big.dtype)
        ext[:, :, :hfull, :wfull] = big
        big = ext
    out = np.ascontiguousarray(big[:, :, padding : padding + oh, padding : padding + ow])
    out += bias.data.reshape(1, cout, 1, 1)

    def backward(g):
        _send(bias, g.sum(axis=(0, 2, 3)))
        gbig = np.zeros((n, cout, hfull + output_padding, wfull + output_padding), dtype=g.dtype)
        gbig[:, :, padding : padding + oh, padding : padding + ow] = g
        gcols = kernels.im2col(gbig[:, :, :hfull, :wfull], kh, kw, stride, stride)
        dxm = gcols @ w2.T  # (N*H*W, Cin)
        _send(x, dxm.reshape(n, h, w, cin).transpose(0, 3, 1, 2))
        _send(weight, (xm.T @ gcols).reshape(weight.shape))

    return _make(out, (x, weight, bias), backward)


class BatchNormState:
    """Running statistics for one BatchNorm2D layer (updated in train mode)."""

    def __init__(self, channels, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def astype(self, dtype):
        out = BatchNormState(len(self.running_mean), dtype)
        out.running_mean = self.running_mean.astype(dtype)
        out.running_var = self.running_var.astype(dtype)
        return out


def batch_norm2d(x, gamma, beta, state, training, momentum=0.1, eps=1e-5):
    """Per-channel normalization over (N, H, W); eval mode uses running stats."""
    if x.ndim != 4:
        raise ShapeMismatchError(f"batch_norm2d expects rank-4 input, got shape {x.shape}")
    n, c, h, w = x.shape
    gview = gamma.data.reshape(1, c, 1, 1)
    bview = beta.data.reshape(1, c, 1, 1)

    if training:
        m = n * h * w
        if m <= 1:
            raise BatchTooSmallError("batch_norm2d train mode needs more than one value per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        state.running_mean += momentum * (mean - state.running_mean)
        state.running_var += momentum * (var * (m / (m - 1)) - state.running_var)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv.reshape(1, c, 1, 1)
        out = gview * xhat + bview

        def backward(g):
            _send(beta, g.sum(axis=(0, 2, 3)))
            _send(gamma, (g * xhat).sum(axis=(0, 2, 3)))
            dxhat = g * gview
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            _send(x, (inv.reshape(1, c, 1, 1) / m) * (m * dxhat - s1 - xhat * s2))

        return _make(out, (x, gamma, beta), backward)

    inv = (1.0 / np.sqrt(state.running_var + eps)).reshape(1, c, 1, 1)
    xhat = (x.data - state.running_mean.reshape(1, c, 1, 1)) * inv
    out = gview * xhat + bview

    def backward(g):
        _send(beta, g.sum(axis=(0, 2, 3)))
        _send(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        _send(x, g * gview * inv)

    return _make(out, (x, gamma, beta), backward)


def dropout2d(x, rate, training, rng=None):
    """Spatial dropout: zeroes whole channels, scales survivors by 1/(1-rate)."""
    if x.ndim != 4:
        raise ShapeMismatchError(f"dropout2d expects rank-4 input, got shape {x.shape}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout2d in train mode requires an rng")
    n, c = x.shape[:2]
    keep = (rng.random((n, c)) >= rate).astype(x.dtype) / (1.0 - rate)
    mask = keep.reshape(n, c, 1, 1)

    def backward(g):
        _send(x, g * mask)

    return _make(x.data * mask, (x,), backward)


def leaky_relu(x, negative_slope=0.01):
    factor = np.where(x.data >= 0, x.dtype.type(1), x.dtype.type(negative_slope))

    def backward(g):
        _send(x, g * factor)

    return _make(x.data * factor, (x,), backward)


def gelu(x):
    """Exact Gaussian-CDF form: x * Phi(x)."""
    phi = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)

    def backward(g):
        _send(x, g * (phi + x.data * pdf))

    return _make((x.data * phi).astype(x.dtype, copy=False), (x,), backward)


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _send(x, y * (g - inner))

    return _make(y, (x,), backward)


def linear(x, weight, bias):
    """Affine map x @ W^T + b with weight (out_features, in_features)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeMismatchError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        _send(bias, g.reshape(-1, g.shape[-1]).sum(axis=0))
        _send(weight, g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1]))
        _send(x, g @ weight.data)

    return _make(out, (x, weight, bias), backward)


def l1_loss(pred, target):
    """Mean absolute difference over all elements; subgradient 0 at ties."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"l1_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    sign = np.sign(diff)
    n = diff.size

    def backward(g):
        scaled = (g / n) * sign
        _send(pred, scaled)
        _send(target, -scaled)

    return _make(np.abs(diff).mean(), (pred, target), backward)


def zero_pad2d(x, pad_h, pad_w):
    """Symmetric zero padding of the two trailing axes."""
    lo_h, hi_h = pad_h
    lo_w, hi_w = pad_w
    n, c, h, w = x.shape

    def backward(g):
        _send(x, g[:, :, lo_h : lo_h + h, lo_w : lo_w + w])

    padded = np.pad(x.data, ((0, 0), (0, 0), (lo_h, hi_h), (lo_w, hi_w)))
    return _make(padded, (x,), backward)


def center_crop2d(x, out_h, out_w):
    """Center crop of the two trailing axes (extra rows split low/high)."""
    n, c, h, w = x.shape
    if out_h > h or out_w > w:
        raise ShapeMismatchError(f"cannot crop {h}x{w} to {out_h}x{out_w}")
    top = (h - out_h) // 2
    left = (w - out_w) // 2

    def backward(g):
        full = np.zeros((n, c, h, w), dtype=g.dtype)
        full[:, :, top : top + out_h, left : left + out_w] = g
        _send(x, full)

    return _make(
        np.ascontiguousarray(x.data[:, :, top : top + out_h, left : left + out_w]),
        (x,),
        backward,
    )
