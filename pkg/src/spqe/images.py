"""Image loading, color conversion and padding helpers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def read_image(path):
    """Load an image file as float32 RGB (H, W, 3) in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def read_gray(path):
    """Load a grayscale map (8- or 16-bit) as float32 (H, W), raw scale."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I", "I;16", "F"):
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read map {path}: {exc}") from exc
    return arr


def write_image_u8(path, arr):
    """Save a float array in [0, 1] (H, W) or (H, W, 3) as an 8-bit PNG."""
    a = np.clip(np.asarray(arr), 0.0, 1.0)
    u8 = np.round(a * 255.0).astype(np.uint8)
    Image.fromarray(u8).save(path)


def to_luma(img):
    """RGB (H, W, 3) -> luminance (H, W) with BT.601 weights."""
    if img.ndim == 2:
        return img
    return img @ _LUMA.astype(img.dtype)


def quantize_u8(img):
    """Round-trip a [0, 1] float image through 8-bit, as PNG storage would."""
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return u8.astype(np.float32) / 255.0


def pad_to_multiple(img, multiple=16):
    """Reflection-pad H and W of (H, W[, C]) up to the next multiple.

    Returns (padded, (pad_h, pad_w)); padding is applied on the bottom/right
    so companion maps (saliency) can be padded identically.
    """
    h, w = img.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return img, (0, 0)
    if h < 2 or w < 2:
        raise DataError(f"image too small to pad: {img.shape}")
    spec = ((0, ph), (0, pw)) + ((0, 0),) * (img.ndim - 2)
    return np.pad(img, spec, mode="reflect"), (ph, pw)


def to_nchw(img):
    """(H, W, 3) -> (1, 3, H, W) contiguous."""
    return np.ascontiguousarray(img.transpose(2, 0, 1)[None])
