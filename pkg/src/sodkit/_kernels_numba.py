"""Numba-jitted hot kernels (default backend).

Loop orders mirror the accumulation orders of ``_kernels_numpy`` so the two
backends produce bit-identical arrays.  All kernels are cached to disk; the
first import after a clean checkout pays a one-time compile cost.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(xp, k, s, d, h_out, w_out):
    # Transposed layout (C*k*k, B*h_out*w_out): row (ci, u, v) is written
    # contiguously while reading one cached input plane, and the matmul
    # that consumes it runs with the long axis as columns.
    b, c, hp, wp = xp.shape
    cols = np.empty((c * k * k, b * h_out * w_out), dtype=xp.dtype)
    for ci in range(c):
        for u in range(k):
            for v in range(k):
                row = (ci * k + u) * k + v
                for n in range(b):
                    for i in range(h_out):
                        r0 = (n * h_out + i) * w_out
                        y = i * s + u * d
                        x0 = v * d
                        for j in range(w_out):
                            cols[row, r0 + j] = xp[n, ci, y, x0 + j * s]
    return cols


@njit(cache=True)
def col2im(gcols_t, b, c, hp, wp, k, s, d, h_out, w_out):
    # gcols_t is (C*k*k, B*h_out*w_out): each (u, v) pass reads one row
    # contiguously and scatters into a single (n, ci) plane small enough
    # to stay cached.  Per destination cell the contributions arrive in
    # (u, v) lexicographic order, matching the numpy backend bitwise.
    gxp = np.zeros((b, c, hp, wp), dtype=gcols_t.dtype)
    kk = k * k
    for n in range(b):
        for ci in range(c):
            cb = ci * kk
            for u in range(k):
                for v in range(k):
                    row = cb + u * k + v
                    for i in range(h_out):
                        r0 = (n * h_out + i) * w_out
                        y = i * s + u * d
                        for j in range(w_out):
                            gxp[n, ci, y, j * s + v * d] += gcols_t[row, r0 + j]
    return gxp


@njit(cache=True)
def maxpool_forward(x, k, s, p):
    b, c, h, w = x.shape
    h_out = (h + 2 * p - k) // s + 1
    w_out = (w + 2 * p - k) // s + 1
    out = np.empty((b, c, h_out, w_out), dtype=x.dtype)
    idx = np.empty((b, c, h_out, w_out), dtype=np.int64)
    for n in range(b):
        for ci in range(c):
            for i in range(h_out):
                for j in range(w_out):
                    best = -np.inf
                    best_idx = -1
                    for u in range(k):
                        xi = i * s + u - p
                        if xi < 0 or xi >= h:
                            continue
                        for v in range(k):
                            xj = j * s + v - p
                            if xj < 0 or xj >= w:
                                continue
                            val = x[n, ci, xi, xj]
                            if val > best:
                                best = val
                                best_idx = xi * w + xj
                    out[n, ci, i, j] = best
                    idx[n, ci, i, j] = best_idx
    return out, idx


@njit(cache=True)
def maxpool_backward(gout, idx, h, w):
    b, c, h_out, w_out = gout.shape
    gx = np.zeros((b, c, h * w), dtype=gout.dtype)
    for n in range(b):
        for ci in range(c):
            for i in range(h_out):
                for j in range(w_out):
                    t = idx[n, ci, i, j]
                    if t >= 0:
                        gx[n, ci, t] += gout[n, ci, i, j]
    return gx.reshape(b, c, h, w)


@njit(cache=True)
def bilinear_forward(x, i0, i1, fi, j0, j1, fj):
    b, c = x.shape[0], x.shape[1]
    h_out, w_out = i0.shape[0], j0.shape[0]
    out = np.empty((b, c, h_out, w_out), dtype=x.dtype)
    for n in range(b):
        for ci in range(c):
            for oi in range(h_out):
                a0, a1, wi = i0[oi], i1[oi], fi[oi]
                for oj in range(w_out):
                    b0, b1, wj = j0[oj], j1[oj], fj[oj]
                    top = (1.0 - wj) * x[n, ci, a0, b0] + wj * x[n, ci, a0, b1]
                    bot = (1.0 - wj) * x[n, ci, a1, b0] + wj * x[n, ci, a1, b1]
                    out[n, ci, oi, oj] = (1.0 - wi) * top + wi * bot
    return out


@njit(cache=True)
def bilinear_backward(gout, i0, i1, fi, j0, j1, fj, h, w):
    b, c, h_out, w_out = gout.shape
    gx = np.zeros((b, c, h, w), dtype=gout.dtype)
    # Four corner passes, matching the numpy backend's np.add.at order.
    for corner in range(4):
        for n in range(b):
            for ci in range(c):
                for oi in range(h_out):
                    wi = fi[oi]
                    for oj in range(w_out):
                        wj = fj[oj]
                        g = gout[n, ci, oi, oj]
                        if corner == 0:
                            gx[n, ci, i0[oi], j0[oj]] += (1.0 - wi) * (1.0 - wj) * g
                        elif corner == 1:
                            gx[n, ci, i0[oi], j1[oj]] += (1.0 - wi) * wj * g
                        elif corner == 2:
                            gx[n, ci, i1[oi], j0[oj]] += wi * (1.0 - wj) * g
                        else:
                            gx[n, ci, i1[oi], j1[oj]] += wi * wj * g
    return gx
