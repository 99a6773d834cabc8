"""Referenced structure score: siamese pyramids, per-scale subtraction,
GAP + per-scale heads, and a learned softmax over the five scale scores.

Also hosts the LR-reference adapter: one learned transposed convolution
per scale factor (stride = scale, kernel = 2 * scale, 3 -> 3 channels),
center-cropped to the SR image size.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .backbone import extract_pyramid
from .errors import DataError
from .heads import apply_head, head_param_shapes, init_head

HR_PASSTHROUGH = "HR"
LR_DECONV = "LR"


def adapter_param_shapes(scale_factor):
    k = 2 * scale_factor
    return {
        f"adapter.s{scale_factor}.w": (3, 3, k, k),
        f"adapter.s{scale_factor}.b": (3,),
    }


def init_adapter(scale_factor, rng, dtype=np.float32):
    """Start near bilinear-ish upsampling: small noise around a flat kernel
    normalized so output magnitude matches the input."""
    k = 2 * scale_factor
    w = np.zeros((3, 3, k, k), dtype=dtype)
    base = 1.0 / (k * k / (scale_factor * scale_factor))
    for c in range(3):
        w[c, c] = base
    w += (rng.standard_normal(w.shape) * 0.01).astype(dtype)
    return {f"adapter.s{scale_factor}.w": w,
            f"adapter.s{scale_factor}.b": np.zeros(3, dtype=dtype)}


def adapt_reference(ref, ref_kind, scale_factor, params, sr_hw):
    """Bring a reference batch to the SR image geometry.

    HR references pass through (dims must already match).  LR references go
    through the learned transposed convolution for their scale factor and
    are center-cropped to the SR size.
    """
    x = ref if isinstance(ref, ag.Tensor) else ag.Tensor(np.asarray(ref))
    sh, sw = sr_hw
    if ref_kind == HR_PASSTHROUGH:
        if x.data.shape[2:] != (sh, sw):
            raise DataError(
                f"HR reference dims {x.data.shape[2:]} differ from SR ({sh}, {sw})")
        return x
    if ref_kind != LR_DECONV:
        raise DataError(f"cannot adapt reference of kind {ref_kind!r}")
    key = f"adapter.s{scale_factor}.w"
    if key not in params:
        raise DataError(f"no adapter trained for scale factor {scale_factor}")
    w = params[key]
    b = params[f"adapter.s{scale_factor}.b"]
    up = ag.conv_transpose2d(x, w if isinstance(w, ag.Tensor) else ag.Tensor(w),
                             b if isinstance(b, ag.Tensor) else ag.Tensor(b),
                             scale_factor)
    oh, ow = up.data.shape[2:]
    if oh < sh or ow < sw or oh - sh > 2 * scale_factor or ow - sw > 2 * scale_factor:
        raise DataError(
            f"adapted reference {oh}x{ow} cannot be cropped to SR {sh}x{sw} "
            f"(tolerance {scale_factor} px per side)")
    return ag.center_crop(up, sh, sw)


def fuse_difference(pyr_r, pyr_s):
    """Per-stage elementwise difference reference - SR."""
    diffs = []
    for fr, fs in zip(pyr_r.stages, pyr_s.stages):
        if fr.data.shape != fs.data.shape:
            raise DataError(
                f"pyramid stage shapes differ: {fr.data.shape} vs {fs.data.shape}")
        diffs.append(ag.sub(fr, fs))
    return diffs


def scale_scores(diffs, params):
    """GAP each difference stage and regress one score per scale."""
    scores = []
    for i, d in enumerate(diffs, 1):
        if not np.all(np.isfinite(d.data)):
            raise DataError(f"non-finite features at stage {i}")
        pooled = ag.global_avg_pool(d)
        scores.append(apply_head(params, f"structure.head{i}", pooled))
    return scores


def combine_scale_scores(scores, params, multi_scale=True):
    """Convex combination with softmax scale weights; single-scale mode uses
    only the deepest stage."""
    if not multi_scale:
        return scores[4]
    logits = params["structure.scale_logits"]
    weights = ag.softmax1d(logits if isinstance(logits, ag.Tensor) else ag.Tensor(logits))
    mat = ag.stack_cols(scores)
    return ag.matvec(mat, weights)


def structure_head_shapes(stage_channels):
    shapes = {}
    for i, c in enumerate(stage_channels, 1):
        shapes.update(head_param_shapes(c, f"structure.head{i}"))
    shapes["structure.scale_logits"] = (5,)
    return shapes


def init_structure_heads(stage_channels, rng, dtype=np.float32, scale=1.0):
    params = {}
    for i, c in enumerate(stage_channels, 1):
        params.update(init_head(c, f"structure.head{i}", rng, dtype, scale))
    params["structure.scale_logits"] = np.zeros(5, dtype=dtype)
    return params


def structure_score(ref, sr, params, config, ref_kind="HR", scale_factor=1,
                    multi_scale=True):
    """Full referenced score for already-padded NCHW batches."""
    sr_t = sr if isinstance(sr, ag.Tensor) else ag.Tensor(np.asarray(sr))
    adapted = adapt_reference(ref, ref_kind, scale_factor, params, sr_t.data.shape[2:])
    pyr_r = extract_pyramid(adapted, params, config, "REF")
    pyr_s = extract_pyramid(sr_t, params, config, "SR")
    scores = scale_scores(fuse_difference(pyr_r, pyr_s), params)
    return combine_scale_scores(scores, params, multi_scale)
