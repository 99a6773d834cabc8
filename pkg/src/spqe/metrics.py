"""Classical full-reference metrics and no-reference artifact measures.

Conventions: images are float arrays in [0, 1] (peak configurable for PSNR),
RGB inputs are reduced to BT.601 luma internally, and all statistics are
computed in float64.  SSIM uses the standard 11x11 Gaussian window
(sigma 1.5), K1=0.01, K2=0.03, with 'valid' windowing.  GMSD uses a 2x2
average-pool prefilter, Prewitt gradients and c=0.0026 on the [0, 1] range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d, correlate2d

from . import kernels
from .errors import DataError, NumericError
from .images import to_luma

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    direction: str  # "higher" or "lower" is better


def _gray64(img):
    g = to_luma(np.asarray(img))
    return g.astype(np.float64, copy=False)


def _check_pair(ref, dist):
    if ref.shape != dist.shape:
        raise DataError(f"image dims differ: {ref.shape} vs {dist.shape}")


def psnr(ref, dist, peak=1.0):
    """10*log10(peak^2 / MSE) in dB; +inf when the images are identical."""
    ref = np.asarray(ref, dtype=np.float64)
    dist = np.asarray(dist, dtype=np.float64)
    _check_pair(ref, dist)
    mse = np.mean((ref - dist) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_stats(x, y, win):
    mu_x = correlate2d(x, win, mode="valid")
    mu_y = correlate2d(y, win, mode="valid")
    xx = correlate2d(x * x, win, mode="valid") - mu_x * mu_x
    yy = correlate2d(y * y, win, mode="valid") - mu_y * mu_y
    xy = correlate2d(x * y, win, mode="valid") - mu_x * mu_y
    return mu_x, mu_y, xx, yy, xy


def ssim(ref, dist, peak=1.0):
    x = _gray64(ref)
    y = _gray64(dist)
    _check_pair(x, y)
    if min(x.shape) < 11:
        raise DataError(f"image too small for 11x11 SSIM window: {x.shape}")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    win = _gaussian_window()
    mu_x, mu_y, xx, yy, xy = _ssim_stats(x, y, win)
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def _downsample2(x):
    h, w = x.shape
    h2, w2 = h - h % 2, w - w % 2
    v = x[:h2, :w2].reshape(h2 // 2, 2, w2 // 2, 2)
    return v.mean(axis=(1, 3))


def ms_ssim(ref, dist, peak=1.0, weights=MS_SSIM_WEIGHTS):
    """Multi-scale SSIM over len(weights) dyadic levels."""
    x = _gray64(ref)
    y = _gray64(dist)
    _check_pair(x, y)
    levels = len(weights)
    if min(x.shape) < 11 * 2 ** (levels - 1):
        raise DataError(
            f"image {x.shape} too small for {levels}-level MS-SSIM "
            f"(needs >= {11 * 2 ** (levels - 1)} per side)")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    win = _gaussian_window()
    value = 1.0
    for level in range(levels):
        mu_x, mu_y, xx, yy, xy = _ssim_stats(x, y, win)
        cs = np.mean((2 * xy + c2) / (xx + yy + c2))
        if level < levels - 1:
            value *= max(cs, 0.0) ** weights[level]
            x = _downsample2(x)
            y = _downsample2(y)
        else:
            lum = np.mean((2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1))
            value *= max(lum * cs, 0.0) ** weights[level]
    return float(value)


_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T


def gmsd(ref, dist, c=0.0026):
    """Standard deviation of the gradient-magnitude-similarity map."""
    x = _gray64(ref)
    y = _gray64(dist)
    _check_pair(x, y)
    if min(x.shape) < 4:
        raise DataError(f"image too small for GMSD: {x.shape}")
    x = _downsample2(x)
    y = _downsample2(y)
    gx = np.hypot(convolve2d(x, _PREWITT_X, mode="same"),
                  convolve2d(x, _PREWITT_Y, mode="same"))
    gy = np.hypot(convolve2d(y, _PREWITT_X, mode="same"),
                  convolve2d(y, _PREWITT_Y, mode="same"))
    gms = (2.0 * gx * gy + c) / (gx * gx + gy * gy + c)
    return float(np.std(gms))


def jpeg_blockiness(img, block=8):
    """Mean luminance discontinuity across block-aligned boundaries minus the
    mean discontinuity inside blocks.  Near zero for unblocked content."""
    x = _gray64(img)
    if min(x.shape) < 2 * block:
        raise DataError(f"image too small for blockiness: {x.shape}")
    h, w = x.shape
    dh = np.abs(np.diff(x, axis=1))  # (h, w-1), diff j..j+1
    dv = np.abs(np.diff(x, axis=0))
    jb = np.arange(w - 1) % block == block - 1
    ib = np.arange(h - 1) % block == block - 1
    boundary = np.concatenate([dh[:, jb].ravel(), dv[ib, :].ravel()])
    interior = np.concatenate([dh[:, ~jb].ravel(), dv[~ib, :].ravel()])
    return float(boundary.mean() - interior.mean())


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0


def blur_measure(img, edge_frac=0.2):
    """Mean edge-spread width (pixels) along strong horizontal/vertical edges.

    Edges are picked per direction at edge_frac of the peak gradient
    magnitude; the spread is the monotone run length through each edge
    pixel.  Returns 0.0 when no edge exceeds the threshold.
    """
    x = _gray64(img)
    if min(x.shape) < 16:
        raise DataError(f"image too small for blur measure: {x.shape}")
    gx = correlate2d(x, _SOBEL_X, mode="same", boundary="symm")
    gy = correlate2d(x, _SOBEL_X.T, mode="same", boundary="symm")
    total = 0.0
    count = 0
    for grad, axis in ((gx, 1), (gy, 0)):
        peakg = np.abs(grad).max()
        if peakg <= 0:
            continue
        mask = np.abs(grad) >= edge_frac * peakg
        t, c = kernels.edge_widths(x, grad, mask, axis)
        total += t
        count += c
    if count == 0:
        return 0.0
    return float(total / count)


FR_METRICS = {
    "psnr": (psnr, "higher"),
    "ssim": (ssim, "higher"),
    "ms_ssim": (ms_ssim, "higher"),
    "gmsd": (gmsd, "lower"),
}

NR_MEASURES = {
    "jpeg_blockiness": (jpeg_blockiness, "lower"),
    "blur_measure": (blur_measure, "lower"),
}


def fr_metric(name, ref, dist):
    fn, direction = FR_METRICS[name]
    value = fn(ref, dist)
    if np.isnan(value):
        raise NumericError(f"{name} produced NaN")
    return MetricResult(name, value, direction)


def nr_measure(name, img):
    fn, direction = NR_MEASURES[name]
    value = fn(img)
    if np.isnan(value):
        raise NumericError(f"{name} produced NaN")
    return MetricResult(name, value, direction)
