"""Deterministic synthetic SR-IQA benchmark with an analytic pseudo-MOS.

Procedural HR images (gratings, polygons, filtered noise) are degraded by
five families covering the usual SR failure modes, including a sharp-but-
warped surrogate for generative artifacts where perceptual quality and
structural fidelity diverge.  Ground truth is a fixed blend of SSIM and
GMSD computed on the 8-bit images as stored, so the dataset grades itself
without any learned component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import gaussian_filter, map_coordinates

from .data import DatasetManifest, SampleRecord, save_manifest
from .errors import DataError
from .images import quantize_u8, write_image_u8
from .metrics import gmsd, ssim

KINDS = ("BICUBIC_UPSCALE", "GAUSS_BLUR", "BLOCK_QUANT", "SHARPEN_WARP", "NOISE")

# pseudo-MOS constants: fixed properties of the benchmark, not tunables
PSEUDO_MOS_GMSD_NORM = 0.35
PSEUDO_MOS_VERSION = 1


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    severity: float
    scale_factor: int = 2
    seed: int = 0  # drives the noise/warp fields, fixed per sample

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown degradation kind {self.kind!r}")
        if not 0.0 <= self.severity <= 1.0:
            raise DataError(f"severity {self.severity} outside [0, 1]")
        if self.scale_factor < 2:
            raise DataError("scale_factor must be >= 2")


def gen_hr(seed, n, size):
    """Procedural HR images: sinusoid gratings + polygons + filtered noise."""
    if size < 32 or size % 16:
        raise DataError(f"size must be >= 32 and a multiple of 16, got {size}")
    rng = np.random.default_rng(seed)
    images = []
    yy, xx = np.mgrid[0:size, 0:size] / size
    for _ in range(n):
        base = np.zeros((size, size))
        for _ in range(rng.integers(2, 5)):
            freq = rng.uniform(2.0, 14.0)
            theta = rng.uniform(0.0, np.pi)
            phase = rng.uniform(0.0, 2 * np.pi)
            base += rng.uniform(0.3, 1.0) * np.sin(
                2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        poly = Image.new("L", (size, size), 0)
        draw = ImageDraw.Draw(poly)
        for _ in range(rng.integers(2, 6)):
            pts = [(int(rng.integers(0, size)), int(rng.integers(0, size)))
                   for _ in range(3)]
            draw.polygon(pts, fill=int(rng.integers(64, 255)))
        noise = gaussian_filter(rng.standard_normal((size, size)),
                                sigma=rng.uniform(1.0, 3.0))
        gray = (0.45 * base / (np.abs(base).max() + 1e-9)
                + 0.35 * (np.asarray(poly, dtype=np.float64) / 255.0 - 0.5) * 2.0
                + 0.20 * noise / (np.abs(noise).max() + 1e-9))
        gray = (gray - gray.min()) / (gray.max() - gray.min() + 1e-12)
        tint = rng.uniform(0.85, 1.0, size=3)
        img = np.clip(gray[:, :, None] * tint[None, None, :], 0.0, 1.0)
        images.append(img.astype(np.float32))
    return images


def _box_down(img, factor):
    h, w = img.shape[:2]
    if h % factor or w % factor:
        raise DataError(f"dims {h}x{w} not divisible by scale factor {factor}")
    v = img.reshape(h // factor, factor, w // factor, factor, -1)
    return v.mean(axis=(1, 3)).astype(img.dtype)


def _resize_bicubic(img, size_hw):
    out = np.empty((size_hw[0], size_hw[1], img.shape[2]), dtype=np.float32)
    for c in range(img.shape[2]):
        ch = Image.fromarray(img[:, :, c].astype(np.float32), mode="F")
        out[:, :, c] = np.asarray(
            ch.resize((size_hw[1], size_hw[0]), Image.BICUBIC), dtype=np.float32)
    return out


def _block_mean(img, block=8):
    h, w = img.shape[:2]
    hb, wb = h - h % block, w - w % block
    out = img.copy()
    v = img[:hb, :wb].reshape(hb // block, block, wb // block, block, -1)
    means = v.mean(axis=(1, 3), keepdims=True)
    out[:hb, :wb] = np.broadcast_to(means, v.shape).reshape(hb, wb, -1)
    return out


def degrade(hr, spec):
    """Produce (lr, sr) for an HR image under one degradation spec.

    lr is always the box-downsampled HR; severity 0 returns sr == hr
    exactly for every kind.
    """
    hr = np.asarray(hr, dtype=np.float32)
    lr = _box_down(hr, spec.scale_factor)
    sev = float(spec.severity)
    if sev == 0.0:
        return lr, hr.copy()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "BICUBIC_UPSCALE":
        recon = _resize_bicubic(lr, hr.shape[:2])
        sr = (1.0 - sev) * hr + sev * recon
    elif spec.kind == "GAUSS_BLUR":
        sr = gaussian_filter(hr, sigma=(3.0 * sev, 3.0 * sev, 0.0))
    elif spec.kind == "BLOCK_QUANT":
        sr = (1.0 - sev) * hr + sev * _block_mean(hr)
    elif spec.kind == "SHARPEN_WARP":
        blurred = gaussian_filter(hr, sigma=(1.5, 1.5, 0.0))
        sharp = hr + 2.0 * sev * (hr - blurred)
        h, w = hr.shape[:2]
        dy = gaussian_filter(rng.standard_normal((h, w)), sigma=8.0)
        dx = gaussian_filter(rng.standard_normal((h, w)), sigma=8.0)
        mag = max(np.abs(dy).max(), np.abs(dx).max(), 1e-9)
        amp = 6.0 * sev
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        coords = [yy + dy / mag * amp, xx + dx / mag * amp]
        sr = np.stack([map_coordinates(sharp[:, :, c], coords, order=1, mode="reflect")
                       for c in range(hr.shape[2])], axis=-1)
    elif spec.kind == "NOISE":
        sr = hr + (0.25 * sev) * rng.standard_normal(hr.shape)
    else:  # pragma: no cover - guarded by DegradationSpec
        raise DataError(f"unknown degradation kind {spec.kind!r}")
    return lr, np.clip(sr, 0.0, 1.0).astype(np.float32)


def pseudo_mos(hr, sr):
    """Analytic stand-in for human opinion: 0.5*SSIM + 0.5*(1 - GMSD/0.35),
    clamped to [0, 1].  Version-locked; do not retune per run."""
    hr = np.asarray(hr)
    sr = np.asarray(sr)
    if hr.shape != sr.shape:
        raise DataError(f"dims differ: {hr.shape} vs {sr.shape}")
    s = ssim(hr, sr)
    g = gmsd(hr, sr)
    value = 0.5 * s + 0.5 * (1.0 - min(g / PSEUDO_MOS_GMSD_NORM, 1.0))
    return float(np.clip(value, 0.0, 1.0))


def default_specs(rng, scale_factor=2):
    """One spec per degradation kind with per-sample severity and field seed."""
    return [DegradationSpec(kind, float(rng.uniform(0.05, 1.0)), scale_factor,
                            int(rng.integers(0, 2 ** 31)))
            for kind in KINDS]


def build_synthetic_manifest(out_dir, seed=42, n_hr=60, size=64, specs=None,
                             ref_kind="HR", dataset_id="synth", scale_factor=2):
    """Write HR/LR/SR images plus a manifest; returns the manifest.

    With specs=None (the default benchmark) each HR image receives all five
    degradation kinds at severities drawn from the master seed: n_hr * 5
    samples.  Fixed specs apply identically to every HR image.  Ground
    truth is computed on the images exactly as stored (after 8-bit
    quantization).
    """
    if ref_kind not in ("HR", "LR", "NONE"):
        raise DataError(f"bad ref_kind {ref_kind!r}")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    hr_images = gen_hr(seed, n_hr, size)
    records = []
    for i, hr in enumerate(hr_images):
        sample_specs = default_specs(rng, scale_factor) if specs is None else specs
        hr_q = quantize_u8(hr)
        hr_name = f"hr_{i:04d}.png"
        write_image_u8(img_dir / hr_name, hr_q)
        for j, spec in enumerate(sample_specs):
            lr, sr = degrade(hr_q, spec)
            lr_q, sr_q = quantize_u8(lr), quantize_u8(sr)
            sid = f"{dataset_id}_{i:04d}_d{j}_{spec.kind.lower()}"
            lr_name = f"{sid}_lr.png"
            sr_name = f"{sid}_sr.png"
            write_image_u8(img_dir / lr_name, lr_q)
            write_image_u8(img_dir / sr_name, sr_q)
            gt = pseudo_mos(hr_q, sr_q)
            ref_name = {"HR": hr_name, "LR": lr_name, "NONE": None}[ref_kind]
            records.append(SampleRecord(
                sample_id=sid,
                dataset_id=dataset_id,
                sr_path=(img_dir / sr_name).resolve(),
                ref_path=(img_dir / ref_name).resolve() if ref_name else None,
                ref_kind=ref_kind,
                scale_factor=spec.scale_factor,
                mos_raw=gt,
                gt=gt,
                sr_method=spec.kind.lower(),
            ))
    manifest = DatasetManifest(records, (0.0, 1.0), "higher", source=out_dir.resolve())
    save_manifest(manifest, out_dir / "manifest.csv")
    (out_dir / "benchmark.json").write_text(json.dumps({
        "seed": seed, "n_hr": n_hr, "size": size, "ref_kind": ref_kind,
        "pseudo_mos_version": PSEUDO_MOS_VERSION,
        "pseudo_mos_gmsd_norm": PSEUDO_MOS_GMSD_NORM,
    }, indent=2) + "\n", encoding="utf-8")
    return manifest
