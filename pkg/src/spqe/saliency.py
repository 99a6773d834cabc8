"""Saliency maps for gating the perception features.

Two providers: a closed-form spectral-residual detector (default, no
external model needed) and sidecar files written by any external detector
(``<sample_id>.sal.png`` next to the manifest, 8- or 16-bit grayscale).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from .errors import DataError
from .images import read_gray, to_luma

FILE = "file"
SPECTRAL_RESIDUAL = "spectral_residual"


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray  # (H, W) float32 in [0, 1]
    provenance: str


def spectral_residual(img, smooth_sigma=3.0):
    """Single-scale spectral-residual saliency, min-max normalized.

    The residual of the log amplitude spectrum against its 3x3 local
    average is recombined with the original phase; the squared inverse
    transform is Gaussian-smoothed and scaled to [0, 1].  A constant input
    has no residual anywhere, which normalizes to an all-ones map.
    """
    gray = to_luma(np.asarray(img, dtype=np.float64))
    spectrum = np.fft.fft2(gray)
    amplitude = np.abs(spectrum)
    phase = np.angle(spectrum)
    log_amp = np.log(amplitude + 1e-12)
    residual = log_amp - uniform_filter(log_amp, size=3, mode="nearest")
    recon = np.fft.ifft2(np.exp(residual + 1j * phase))
    sal = gaussian_filter(np.abs(recon) ** 2, sigma=smooth_sigma)
    lo, hi = sal.min(), sal.max()
    if hi - lo <= 1e-12 * max(hi, 1.0):
        return np.ones_like(gray, dtype=np.float32)
    return ((sal - lo) / (hi - lo)).astype(np.float32)


def load_saliency_file(path, expect_shape):
    """Read a sidecar map and bring it to [0, 1] by scale only.

    Maps already in [0, 1] pass through unchanged; wider ranges (8/16-bit)
    are divided by their max.  Constant maps become all-ones.
    """
    arr = read_gray(path)
    if arr.shape != tuple(expect_shape):
        raise DataError(
            f"saliency map {path} has dims {arr.shape}, image is {tuple(expect_shape)}")
    hi = float(arr.max())
    lo = float(arr.min())
    if hi == lo:
        return np.ones_like(arr, dtype=np.float32)
    if hi > 1.0:
        arr = arr / hi
    return np.clip(arr, 0.0, 1.0).astype(np.float32)


def sidecar_path(manifest_dir, sample_id):
    return Path(manifest_dir) / f"{sample_id}.sal.png"


def compute_saliency(img, provider=SPECTRAL_RESIDUAL, file_path=None):
    """Produce the saliency map for an SR image.

    provider "file" requires file_path; "auto" uses the file when it
    exists and falls back to the spectral residual.
    """
    h, w = np.asarray(img).shape[:2]
    if provider == "auto":
        provider = FILE if file_path is not None and Path(file_path).is_file() \
            else SPECTRAL_RESIDUAL
    if provider == FILE:
        if file_path is None:
            raise DataError("saliency provider 'file' needs a map path")
        return SaliencyMap(load_saliency_file(file_path, (h, w)), FILE)
    if provider == SPECTRAL_RESIDUAL:
        return SaliencyMap(spectral_residual(img), SPECTRAL_RESIDUAL)
    raise DataError(f"unknown saliency provider {provider!r}")
