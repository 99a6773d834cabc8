"""Numba-compiled loop kernels; the default hot path.

Same contracts as numpy_backend.  Loop nests are written scalar-style with
no array temporaries so LLVM can keep the innermost spatial loops in
registers.  cache=True persists the compiled kernels across processes,
which matters for CLI startup time.
"""

from __future__ import annotations

import numpy as np
from numba import njit


# Wide feature maps vectorize best along the output row; narrow deep stages
# (many channels, few pixels) go through im2col + BLAS dot instead.
_ROW_MIN_WIDTH = 32


@njit(cache=True)
def _pad_nchw(x, p):
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=x.dtype)
    xp[:, :, p:p + h, p:p + wd] = x
    return xp


@njit(cache=True)
def _im2col(xp_s, k, h, wd):
    """One padded sample (c, h+2p, w+2p) -> (c*k*k, h*w) patch matrix."""
    c = xp_s.shape[0]
    cols = np.empty((c * k * k, h * wd), dtype=xp_s.dtype)
    r = 0
    for ci in range(c):
        for ki in range(k):
            for kj in range(k):
                for hh in range(h):
                    base = hh * wd
                    xrow = xp_s[ci, hh + ki]
                    for ww in range(wd):
                        cols[r, base + ww] = xrow[ww + kj]
                r += 1
    return cols


@njit(cache=True)
def conv2d_fwd(x, w, b):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = _pad_nchw(x, k // 2)
    y = np.empty((n, f, h, wd), dtype=x.dtype)
    if wd >= _ROW_MIN_WIDTH:
        for ni in range(n):
            for fi in range(f):
                for hh in range(h):
                    row = y[ni, fi, hh]
                    row[:] = b[fi]
                    for ci in range(c):
                        for ki in range(k):
                            xrow = xp[ni, ci, hh + ki]
                            for kj in range(k):
                                wv = w[fi, ci, ki, kj]
                                for ww in range(wd):
                                    row[ww] += wv * xrow[ww + kj]
    else:
        w2 = np.ascontiguousarray(w).reshape(f, c * k * k)
        for ni in range(n):
            cols = _im2col(xp[ni], k, h, wd)
            prod = np.dot(w2, cols)
            for fi in range(f):
                for hh in range(h):
                    for ww in range(wd):
                        y[ni, fi, hh, ww] = prod[fi, hh * wd + ww] + b[fi]
    return y


@njit(cache=True)
def conv2d_bwd_x(w, dy):
    n, f, h, wd = dy.shape
    _, c, k, _ = w.shape
    dyp = _pad_nchw(dy, k // 2)
    dx = np.empty((n, c, h, wd), dtype=dy.dtype)
    if wd >= _ROW_MIN_WIDTH:
        for ni in range(n):
            for ci in range(c):
                for hh in range(h):
                    row = dx[ni, ci, hh]
                    row[:] = 0.0
                    for fi in range(f):
                        for ki in range(k):
                            drow = dyp[ni, fi, hh + ki]
                            for kj in range(k):
                                # flipped kernel: correlation transpose
                                wv = w[fi, ci, k - 1 - ki, k - 1 - kj]
                                for ww in range(wd):
                                    row[ww] += wv * drow[ww + kj]
    else:
        # correlation transpose as conv of dy with the flipped, swapped kernel
        wt = np.empty((c, f * k * k), dtype=w.dtype)
        for ci in range(c):
            r = 0
            for fi in range(f):
                for ki in range(k):
                    for kj in range(k):
                        wt[ci, r] = w[fi, ci, k - 1 - ki, k - 1 - kj]
                        r += 1
        for ni in range(n):
            cols = _im2col(dyp[ni], k, h, wd)
            prod = np.dot(wt, cols)
            for ci in range(c):
                for hh in range(h):
                    for ww in range(wd):
                        dx[ni, ci, hh, ww] = prod[ci, hh * wd + ww]
    return dx


@njit(cache=True)
def conv2d_bwd_w(x, dy, k):
    n, c, h, wd = x.shape
    f = dy.shape[1]
    xp = _pad_nchw(x, k // 2)
    dw = np.zeros((f, c, k, k), dtype=x.dtype)
    db = np.zeros(f, dtype=x.dtype)
    if wd >= _ROW_MIN_WIDTH:
        for ni in range(n):
            for fi in range(f):
                s = x.dtype.type(0.0)
                for hh in range(h):
                    for ww in range(wd):
                        s += dy[ni, fi, hh, ww]
                db[fi] += s
                for ci in range(c):
                    for ki in range(k):
                        for kj in range(k):
                            acc = x.dtype.type(0.0)
                            for hh in range(h):
                                drow = dy[ni, fi, hh]
                                xrow = xp[ni, ci, hh + ki]
                                for ww in range(wd):
                                    acc += drow[ww] * xrow[ww + kj]
                            dw[fi, ci, ki, kj] += acc
    else:
        dw2 = np.zeros((f, c * k * k), dtype=x.dtype)
        for ni in range(n):
            cols = _im2col(xp[ni], k, h, wd)
            dy2 = np.ascontiguousarray(dy[ni]).reshape(f, h * wd)
            dw2 += np.dot(dy2, cols.T)
            for fi in range(f):
                s = x.dtype.type(0.0)
                for hh in range(h):
                    for ww in range(wd):
                        s += dy[ni, fi, hh, ww]
                db[fi] += s
        r = 0
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    for fi in range(f):
                        dw[fi, ci, ki, kj] = dw2[fi, r]
                    r += 1
    return dw, db


@njit(cache=True)
def convt2d_fwd(x, w, b, stride):
    n, c, h, wd = x.shape
    _, f, k, _ = w.shape
    oh = (h - 1) * stride + k
    ow = (wd - 1) * stride + k
    y = np.empty((n, f, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for fi in range(f):
            for i in range(oh):
                for j in range(ow):
                    y[ni, fi, i, j] = b[fi]
            for ci in range(c):
                for hi in range(h):
                    for wi in range(wd):
                        v = x[ni, ci, hi, wi]
                        for ki in range(k):
                            for kj in range(k):
                                y[ni, fi, hi * stride + ki, wi * stride + kj] += \
                                    v * w[ci, fi, ki, kj]
    return y


@njit(cache=True)
def convt2d_bwd(x, w, dy, stride):
    n, c, h, wd = x.shape
    _, f, k, _ = w.shape
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(f, dtype=x.dtype)
    for ni in range(n):
        for fi in range(f):
            s = x.dtype.type(0.0)
            for i in range(dy.shape[2]):
                for j in range(dy.shape[3]):
                    s += dy[ni, fi, i, j]
            db[fi] += s
            for ci in range(c):
                for hi in range(h):
                    for wi in range(wd):
                        v = x[ni, ci, hi, wi]
                        acc = x.dtype.type(0.0)
                        for ki in range(k):
                            for kj in range(k):
                                g = dy[ni, fi, hi * stride + ki, wi * stride + kj]
                                acc += g * w[ci, fi, ki, kj]
                                dw[ci, fi, ki, kj] += v * g
                        dx[ni, ci, hi, wi] += acc
    return dx, dw, db


@njit(cache=True)
def maxpool2_fwd(x):
    n, c, h, w = x.shape
    hh = h // 2
    ww = w // 2
    y = np.empty((n, c, hh, ww), dtype=x.dtype)
    idx = np.empty((n, c, hh, ww), dtype=np.uint8)
    for ni in range(n):
        for ci in range(c):
            for i in range(hh):
                for j in range(ww):
                    best = x[ni, ci, 2 * i, 2 * j]
                    bq = 0
                    q = 0
                    for di in range(2):
                        for dj in range(2):
                            v = x[ni, ci, 2 * i + di, 2 * j + dj]
                            if v > best:
                                best = v
                                bq = q
                            q += 1
                    y[ni, ci, i, j] = best
                    idx[ni, ci, i, j] = bq
    return y, idx


@njit(cache=True)
def maxpool2_bwd(dy, idx):
    n, c, hh, ww = dy.shape
    dx = np.zeros((n, c, hh * 2, ww * 2), dtype=dy.dtype)
    for ni in range(n):
        for ci in range(c):
            for i in range(hh):
                for j in range(ww):
                    q = idx[ni, ci, i, j]
                    dx[ni, ci, 2 * i + q // 2, 2 * j + q % 2] = dy[ni, ci, i, j]
    return dx


@njit(cache=True)
def bilinear_resize(img, oh, ow):
    h, w = img.shape
    out = np.empty((oh, ow), dtype=img.dtype)
    sy = h / oh
    sx = w / ow
    for i in range(oh):
        fy = (i + 0.5) * sy - 0.5
        if fy < 0.0:
            fy = 0.0
        if fy > h - 1:
            fy = h - 1.0
        y0 = int(np.floor(fy))
        y1 = min(y0 + 1, h - 1)
        wy = fy - y0
        for j in range(ow):
            fx = (j + 0.5) * sx - 0.5
            if fx < 0.0:
                fx = 0.0
            if fx > w - 1:
                fx = w - 1.0
            x0 = int(np.floor(fx))
            x1 = min(x0 + 1, w - 1)
            wx = fx - x0
            top = img[y0, x0] + (img[y0, x1] - img[y0, x0]) * wx
            bot = img[y1, x0] + (img[y1, x1] - img[y1, x0]) * wx
            out[i, j] = top + (bot - top) * wy
    return out


@njit(cache=True)
def edge_widths(gray, grad, mask, axis):
    if axis == 0:
        gray = gray.T.copy()
        grad = grad.T.copy()
        mask = mask.T.copy()
    h, w = gray.shape
    total = 0.0
    count = 0
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            sgn = 1.0 if grad[i, j] > 0 else -1.0
            left = j
            while left > 0 and (gray[i, left] - gray[i, left - 1]) * sgn > 0:
                left -= 1
            right = j
            while right < w - 1 and (gray[i, right + 1] - gray[i, right]) * sgn > 0:
                right += 1
            total += right - left
            count += 1
    return total, count
