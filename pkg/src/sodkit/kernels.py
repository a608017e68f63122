"""Backend dispatch for the hot array kernels.

Two interchangeable implementations exist: numba-jitted loops
(``_kernels_numba``, the default) and pure numpy (``_kernels_numpy``).
Setting ``SODKIT_NO_NUMBA=1`` in the environment before import selects the
numpy path; the same happens automatically when numba is not importable.
``BACKEND`` reports which one is live.  Both backends are arranged to
produce bit-identical outputs, so switching them never changes results,
only speed.

Convolution itself is composed here from im2col plus a BLAS matmul that
both backends share; only the unfold/fold/scatter stages differ.
"""

import os

import numpy as np

from . import _kernels_numpy

_want_numpy = os.environ.get("SODKIT_NO_NUMBA", "") not in ("", "0")
if not _want_numpy:
    try:
        from . import _kernels_numba as _impl
        BACKEND = "numba"
    except ImportError:
        _impl = _kernels_numpy
        BACKEND = "numpy"
else:
    _impl = _kernels_numpy
    BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
bilinear_forward = _impl.bilinear_forward
bilinear_backward = _impl.bilinear_backward


def conv_out_size(size, k, s, p, d=1):
    """Output length of a conv/pool axis: floor((size + 2p - d(k-1) - 1)/s) + 1."""
    return (size + 2 * p - d * (k - 1) - 1) // s + 1


def pad_zeros(x, p):
    """Zero-pad the two trailing spatial axes by p on each side."""
    if p == 0:
        return x
    b, c, h, w = x.shape
    xp = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    xp[:, :, p : p + h, p : p + w] = x
    return xp


def bilinear_coeffs(in_size, out_size):
    """Source indices and weights for one axis of half-pixel-centred resizing.

    Output pixel o samples source coordinate (o + 0.5) * in/out - 0.5,
    clamped at 0; the value is lerped between floor and floor+1 (the latter
    clamped to the last row).  Returns (i0, i1, frac) with int64/int64/float64.
    """
    o = np.arange(out_size, dtype=np.float64)
    src = (o + 0.5) * (in_size / out_size) - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, in_size - 1)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = src - i0
    return i0, i1, frac


def conv2d_forward(x, w, bias, stride, padding, dilation=1):
    """Cross-correlate (B,Cin,H,W) with (Cout,Cin,k,k) weights.

    Returns (out, cols); cols is the transposed unfolded input matrix
    (C*k*k, B*h_out*w_out), kept for the backward pass.
    """
    b, c_in, h, w_in = x.shape
    c_out, _, k, _ = w.shape
    h_out = conv_out_size(h, k, stride, padding, dilation)
    w_out = conv_out_size(w_in, k, stride, padding, dilation)
    xp = pad_zeros(x, padding)
    cols = im2col(xp, k, stride, dilation, h_out, w_out)
    out2 = w.reshape(c_out, -1) @ cols
    if bias is not None:
        out2 = out2 + bias[:, None]
    out = out2.reshape(c_out, b, h_out, w_out).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), cols


def _grad_rows(gout):
    # (B,Cout,Ho,Wo) -> (Cout, B*Ho*Wo), matching the cols column order
    c_out = gout.shape[1]
    return np.ascontiguousarray(gout.transpose(1, 0, 2, 3)).reshape(c_out, -1)


def conv2d_backward_params(gout, cols, w_shape):
    """Weight/bias gradients only, for inputs that need no gradient."""
    g2 = _grad_rows(gout)
    gw = (g2 @ cols.T).reshape(w_shape)
    gb = gout.sum(axis=(0, 2, 3))
    return gw, gb


def conv2d_backward(gout, cols, x_shape, w, stride, padding, dilation=1):
    """Gradients of conv2d_forward w.r.t. input, weights and bias."""
    b, c_in, h, w_in = x_shape
    c_out, _, k, _ = w.shape
    h_out, w_out = gout.shape[2], gout.shape[3]
    g2 = _grad_rows(gout)
    gw = (g2 @ cols.T).reshape(w.shape)
    gb = gout.sum(axis=(0, 2, 3))
    gcols_t = w.reshape(c_out, -1).T @ g2
    hp, wp = h + 2 * padding, w_in + 2 * padding
    gxp = col2im(gcols_t, b, c_in, hp, wp, k, stride, dilation, h_out, w_out)
    if padding > 0:
        gx = gxp[:, :, padding : padding + h, padding : padding + w_in]
    else:
        gx = gxp
    return np.ascontiguousarray(gx), gw, gb
