"""No-reference perception score: saliency-gated stage-5 SR features,
global average pooling, and a scoring head."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from . import kernels
from .backbone import extract_pyramid
from .errors import DataError
from .heads import apply_head, head_param_shapes, init_head


def resize_saliency(sal_maps, out_hw):
    """Bilinear-resize per-sample (H, W) maps to the feature grid.

    Returns a constant (N, 1, h, w) array for broadcasting over channels.
    """
    oh, ow = out_hw
    out = np.stack([kernels.bilinear_resize(np.ascontiguousarray(m, dtype=np.float64), oh, ow)
                    for m in sal_maps])
    return out[:, None, :, :]


def saliency_gate(sal_maps, f_s):
    """Gate stage-5 features with the (resized, channel-broadcast) saliency."""
    f = f_s if isinstance(f_s, ag.Tensor) else ag.Tensor(np.asarray(f_s))
    if not np.all(np.isfinite(f.data)):
        raise DataError("non-finite features in saliency gate")
    n, c, h, w = f.data.shape
    sal = resize_saliency(sal_maps, (h, w)).astype(f.data.dtype)
    if not np.all(np.isfinite(sal)):
        raise DataError("non-finite saliency values")
    return ag.mul(f, ag.Tensor(sal))


def perception_head_shapes(c5):
    return head_param_shapes(c5, "perception.head")


def init_perception_head(c5, rng, dtype=np.float32, scale=1.0):
    return init_head(c5, "perception.head", rng, dtype, scale)


def perception_score_from_features(f_s, sal_maps, params, use_saliency=True):
    gated = saliency_gate(sal_maps, f_s) if use_saliency else f_s
    pooled = ag.global_avg_pool(gated)
    return apply_head(params, "perception.head", pooled)


def perception_score(sr, sal_maps, params, config, use_saliency=True):
    """Standalone no-reference score for an already-padded NCHW batch."""
    pyr = extract_pyramid(sr, params, config, "SR")
    return perception_score_from_features(pyr.f_s, sal_maps, params, use_saliency)
