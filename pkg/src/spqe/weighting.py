"""Adaptive perception weight regressed from the artifacts-aware stage-5
SR features; the structure weight is its complement."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .errors import DataError
from .heads import apply_head, head_param_shapes, init_head


def weight_head_shapes(c5):
    return head_param_shapes(c5, "weight.head")


def init_weight_head(c5, rng, dtype=np.float32, scale=1.0):
    return init_head(c5, "weight.head", rng, dtype, scale)


def perception_weight(f_s, params):
    """W_p in (0, 1) from GAP of the stage-5 SR features."""
    f = f_s if isinstance(f_s, ag.Tensor) else ag.Tensor(np.asarray(f_s))
    if not np.all(np.isfinite(f.data)):
        raise DataError("non-finite features in weight regressor")
    pooled = ag.global_avg_pool(f)
    return apply_head(params, "weight.head", pooled)
