"""Vectorized numpy implementations of the hot kernels.

All convolution kernels work on NCHW arrays and preserve the input dtype
(float32 for production, float64 for gradient checking).  Convolutions are
stride 1 with zero "same" padding; transposed convolutions take an explicit
stride.  These are the fallback path when numba is unavailable or disabled
via SPQE_BACKEND=numpy.
"""

from __future__ import annotations

import numpy as np


def _pad_same(x, k):
    p = k // 2
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d_fwd(x, w, b):
    """Same-padding stride-1 convolution.

    x: (N, C, H, W), w: (F, C, k, k), b: (F,).  Returns (N, F, H, W).
    """
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = _pad_same(x, k)
    cols = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # cols: (N, C, H, W, k, k) -> contract C,k,k against w
    y = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, H, W, F)
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    y += b[None, :, None, None]
    return y.astype(x.dtype, copy=False)


def conv2d_bwd_x(w, dy):
    """Input gradient of conv2d_fwd: correlate dy with the flipped kernel."""
    wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    zero_b = np.zeros(wt.shape[0], dtype=dy.dtype)
    return conv2d_fwd(dy, wt, zero_b)


def conv2d_bwd_w(x, dy, k):
    """Weight and bias gradients of conv2d_fwd."""
    n, c, h, wd = x.shape
    f = dy.shape[1]
    xp = _pad_same(x, k)
    cols = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # (N, C, H, W, k, k) x (N, F, H, W) -> (F, C, k, k)
    dw = np.tensordot(dy, cols, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    return dw.astype(x.dtype, copy=False), db.astype(x.dtype, copy=False)


def convt2d_fwd(x, w, b, stride):
    """Transposed convolution. x: (N, C, H, W), w: (C, F, k, k), b: (F,).

    Output spatial size is (H-1)*stride + k.
    """
    n, c, h, wd = x.shape
    _, f, k, _ = w.shape
    oh = (h - 1) * stride + k
    ow = (wd - 1) * stride + k
    z = np.tensordot(x, w, axes=([1], [0]))  # (N, H, W, F, k, k)
    y = np.zeros((n, f, oh, ow), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            y[:, :, ki:ki + stride * h:stride, kj:kj + stride * wd:stride] += (
                z[:, :, :, :, ki, kj].transpose(0, 3, 1, 2))
    y += b[None, :, None, None]
    return y


def convt2d_bwd(x, w, dy, stride):
    """Gradients of convt2d_fwd w.r.t. input, weights and bias."""
    n, c, h, wd = x.shape
    _, f, k, _ = w.shape
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for ki in range(k):
        for kj in range(k):
            dyk = dy[:, :, ki:ki + stride * h:stride, kj:kj + stride * wd:stride]
            # dx[n,c,h,w] += sum_f dy[n,f,h*s+ki,w*s+kj] * w[c,f,ki,kj]
            dx += np.tensordot(dyk, w[:, :, ki, kj], axes=([1], [1])).transpose(0, 3, 1, 2)
            # dw[c,f,ki,kj] = sum_{n,h,w} x[n,c,h,w] * dyk[n,f,h,w]
            dw[:, :, ki, kj] = np.tensordot(x, dyk, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db.astype(x.dtype, copy=False)


def maxpool2_fwd(x):
    """2x2 stride-2 max pooling; dims must be even.

    Returns the pooled map and a uint8 quadrant index (0..3, first max wins)
    for the backward scatter.
    """
    n, c, h, w = x.shape
    v = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    v = v.reshape(n, c, h // 2, w // 2, 4)
    idx = v.argmax(axis=-1).astype(np.uint8)
    y = np.take_along_axis(v, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_bwd(dy, idx):
    n, c, hh, ww = dy.shape
    flat = np.zeros((n, c, hh, ww, 4), dtype=dy.dtype)
    np.put_along_axis(flat, idx[..., None].astype(np.intp), dy[..., None], axis=-1)
    dx = flat.reshape(n, c, hh, ww, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(n, c, hh * 2, ww * 2))


def bilinear_resize(img, oh, ow):
    """Bilinear resample of a 2D map to (oh, ow), half-pixel centers."""
    h, w = img.shape
    out_dtype = img.dtype if img.dtype in (np.float32, np.float64) else np.float64
    sy = h / oh
    sx = w / ow
    fy = (np.arange(oh) + 0.5) * sy - 0.5
    fx = (np.arange(ow) + 0.5) * sx - 0.5
    y0 = np.clip(np.floor(fy), 0, h - 1).astype(np.intp)
    x0 = np.clip(np.floor(fx), 0, w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(fy - y0, 0.0, 1.0)
    wx = np.clip(fx - x0, 0.0, 1.0)
    a = img[np.ix_(y0, x0)]
    bq = img[np.ix_(y0, x1)]
    cq = img[np.ix_(y1, x0)]
    d = img[np.ix_(y1, x1)]
    top = a + (bq - a) * wx[None, :]
    bot = cq + (d - cq) * wx[None, :]
    return (top + (bot - top) * wy[:, None]).astype(out_dtype, copy=False)


def edge_widths(gray, grad, mask, axis):
    """Accumulate edge-spread widths along rows (axis=1) or columns (axis=0).

    For each masked pixel, walks outward from the edge position while the
    profile stays monotone in the gradient direction; the width is the span
    between the two local extrema.  Returns (total_width, count).
    """
    if axis == 0:
        gray = gray.T
        grad = grad.T
        mask = mask.T
    h, w = gray.shape
    total = 0.0
    count = 0
    for i in range(h):
        row = gray[i]
        for j in range(w):
            if not mask[i, j]:
                continue
            sgn = 1.0 if grad[i, j] > 0 else -1.0
            left = j
            while left > 0 and (row[left] - row[left - 1]) * sgn > 0:
                left -= 1
            right = j
            while right < w - 1 and (row[right + 1] - row[right]) * sgn > 0:
                right += 1
            total += right - left
            count += 1
    return total, count
