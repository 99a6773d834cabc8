"""Shared three-layer scoring heads: C -> C/2 -> C/4 -> 1 with a minimum
hidden width of 4, ReLU between layers, sigmoid on the output."""

from __future__ import annotations

import numpy as np

from . import autograd as ag


def head_widths(c_in):
    return max(4, c_in // 2), max(4, c_in // 4)


def head_param_shapes(c_in, prefix):
    h1, h2 = head_widths(c_in)
    return {
        f"{prefix}.fc1.w": (h1, c_in), f"{prefix}.fc1.b": (h1,),
        f"{prefix}.fc2.w": (h2, h1), f"{prefix}.fc2.b": (h2,),
        f"{prefix}.fc3.w": (1, h2), f"{prefix}.fc3.b": (1,),
    }


def init_head(c_in, prefix, rng, dtype=np.float32, scale=1.0):
    params = {}
    for name, shape in head_param_shapes(c_in, prefix).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            std = scale * np.sqrt(2.0 / shape[1])
            params[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return params


def apply_head(params, prefix, x):
    """x: (N, C) tensor -> (N,) score tensor in (0, 1)."""
    h = ag.relu(ag.linear(x, params[f"{prefix}.fc1.w"], params[f"{prefix}.fc1.b"]))
    h = ag.relu(ag.linear(h, params[f"{prefix}.fc2.w"], params[f"{prefix}.fc2.b"]))
    out = ag.sigmoid(ag.linear(h, params[f"{prefix}.fc3.w"], params[f"{prefix}.fc3.b"]))
    return ag.reshape(out, (x.data.shape[0],))
