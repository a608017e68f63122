"""Pure-numpy implementations of the hot array kernels.

This is the fallback backend selected by ``SODKIT_NO_NUMBA=1`` (see
``sodkit.kernels``).  Every function here is the reference twin of a numba
kernel in ``_kernels_numba``; accumulation orders are arranged so both
backends produce bit-identical results, which the test suite asserts.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp, k, s, d, h_out, w_out):
    """Unfold padded input (B,C,Hp,Wp) into a (C*k*k, B*h_out*w_out) matrix.

    Row (ci*k + u)*k + v holds input cell (ci, i*s + u*d, j*s + v*d) at
    column (b*h_out + i)*w_out + j; transposed relative to the textbook
    layout so the consuming matmul keeps the long axis as columns.
    """
    span = d * (k - 1) + 1
    win = sliding_window_view(xp, (span, span), axis=(2, 3))
    win = win[:, :, ::s, ::s, ::d, ::d]           # (B, C, h_out, w_out, k, k)
    win = win[:, :, :h_out, :w_out]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(-1, xp.shape[0] * h_out * w_out)
    return np.ascontiguousarray(cols)


def col2im(gcols_t, b, c, hp, wp, k, s, d, h_out, w_out):
    """Fold transposed gradient columns (C*k*k, B*h_out*w_out) back onto
    the padded input, summing overlaps.

    Additions happen in (ku, kv) order per destination cell; the numba twin
    uses the same order so the two backends agree bitwise.
    """
    g = gcols_t.reshape(c, k, k, b, h_out, w_out)
    gxp = np.zeros((b, c, hp, wp), dtype=gcols_t.dtype)
    for u in range(k):
        for v in range(k):
            gxp[:, :, u * d : u * d + h_out * s : s, v * d : v * d + w_out * s : s] += \
                g[:, u, v].transpose(1, 0, 2, 3)
    return gxp


def maxpool_forward(x, k, s, p):
    """Per-window max of (B,C,H,W) input.

    Padding cells never win a window (they are -inf); ties go to the first
    occurrence in row-major window order.  Returns (out, idx) where idx is
    the flat spatial index (row*W + col) of each winner, -1 if the window
    holds no real cell.
    """
    bsz, c, h, w = x.shape
    if p > 0:
        xp = np.full((bsz, c, h + 2 * p, w + 2 * p), -np.inf, dtype=x.dtype)
        xp[:, :, p : p + h, p : p + w] = x
    else:
        xp = x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    h_out, w_out = win.shape[2], win.shape[3]
    flat = win.reshape(bsz, c, h_out, w_out, k * k)
    arg = flat.argmax(axis=-1)                     # first max in row-major order
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    u, v = arg // k, arg % k
    oi = np.arange(h_out)[:, None] * s
    oj = np.arange(w_out)[None, :] * s
    xi = oi[None, None] + u - p
    xj = oj[None, None] + v - p
    idx = xi * w + xj
    idx[~np.isfinite(out)] = -1
    return np.ascontiguousarray(out), np.ascontiguousarray(idx)


def maxpool_backward(gout, idx, h, w):
    """Scatter gout back to the winning input cells (accumulating)."""
    bsz, c = gout.shape[0], gout.shape[1]
    gx = np.zeros((bsz, c, h * w), dtype=gout.dtype)
    bi = np.arange(bsz)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    valid = idx >= 0
    np.add.at(gx, (np.broadcast_to(bi, idx.shape)[valid],
                   np.broadcast_to(ci, idx.shape)[valid],
                   idx[valid]), gout[valid])
    return gx.reshape(bsz, c, h, w)


def bilinear_forward(x, i0, i1, fi, j0, j1, fj):
    """Bilinear gather: out[oi,oj] interpolates the four source corners.

    Index/weight vectors come from ``sodkit.kernels.bilinear_coeffs``.
    Grouping of the arithmetic matches the numba twin exactly.
    """
    fi = fi[:, None]
    fj = fj[None, :]
    x00 = x[:, :, i0][:, :, :, j0]
    x01 = x[:, :, i0][:, :, :, j1]
    x10 = x[:, :, i1][:, :, :, j0]
    x11 = x[:, :, i1][:, :, :, j1]
    return (1.0 - fi) * ((1.0 - fj) * x00 + fj * x01) + fi * ((1.0 - fj) * x10 + fj * x11)


def bilinear_backward(gout, i0, i1, fi, j0, j1, fj, h, w):
    """Transpose of bilinear_forward: scatter each output pixel onto its
    four source corners, one corner pass at a time."""
    bsz, c = gout.shape[0], gout.shape[1]
    gx = np.zeros((bsz, c, h, w), dtype=gout.dtype)
    fi = fi[:, None]
    fj = fj[None, :]
    ii0 = np.broadcast_to(i0[:, None], gout.shape[2:])
    ii1 = np.broadcast_to(i1[:, None], gout.shape[2:])
    jj0 = np.broadcast_to(j0[None, :], gout.shape[2:])
    jj1 = np.broadcast_to(j1[None, :], gout.shape[2:])
    for wgt, ii, jj in (
        ((1.0 - fi) * (1.0 - fj), ii0, jj0),
        ((1.0 - fi) * fj, ii0, jj1),
        (fi * (1.0 - fj), ii1, jj0),
        (fi * fj, ii1, jj1),
    ):
        np.add.at(gx, (np.arange(bsz)[:, None, None, None],
                       np.arange(c)[None, :, None, None],
                       ii[None, None], jj[None, None]), wgt * gout)
    return gx
