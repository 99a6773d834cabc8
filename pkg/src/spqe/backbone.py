"""Five-stage convolutional feature-pyramid encoder.

One parameter set serves both the reference and SR branches (siamese); a
stage's output is taken before each 2x2 max-pool downsampling, so stage i
has spatial size H/2^(i-1).  Inputs must arrive padded to a multiple of 16.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .container import load_arrays, save_arrays
from .errors import DataError

RELU = "relu"


@dataclass(frozen=True)
class BackboneConfig:
    stage_channels: tuple[int, int, int, int, int]
    convs_per_stage: tuple[int, int, int, int, int]
    kernel_size: int = 3
    activation: str = RELU
    input_size: tuple[int, int] | None = None  # None = free
    preset: str = "custom"

    def __post_init__(self):
        if len(self.stage_channels) != 5 or len(self.convs_per_stage) != 5:
            raise DataError("backbone needs exactly 5 stages")
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise DataError("kernel_size must be odd and positive")
        if self.activation != RELU:
            raise DataError(f"unsupported activation {self.activation!r}")


def vgg16_like():
    return BackboneConfig((64, 128, 256, 512, 512), (2, 2, 3, 3, 3), 3, preset="VGG16_LIKE")


def tiny():
    return BackboneConfig((8, 16, 32, 64, 64), (1, 1, 1, 1, 1), 3, preset="TINY")


PRESETS = {"VGG16_LIKE": vgg16_like, "TINY": tiny}


@dataclass
class FeaturePyramid:
    """Per-stage feature maps for one image batch; stage 5 of an SR-branch
    pyramid is the artifacts-aware feature used downstream."""

    stages: list  # five (N, C_i, H_i, W_i) tensors
    branch_tag: str  # "REF" or "SR"

    @property
    def f_s(self):
        return self.stages[4]


def param_shapes(config):
    """Ordered mapping of backbone parameter names to shapes."""
    k = config.kernel_size
    shapes = {}
    c_in = 3
    for i, (c_out, reps) in enumerate(zip(config.stage_channels, config.convs_per_stage), 1):
        for j in range(1, reps + 1):
            shapes[f"backbone.stage{i}.conv{j}.w"] = (c_out, c_in, k, k)
            shapes[f"backbone.stage{i}.conv{j}.b"] = (c_out,)
            c_in = c_out
    return shapes


def init_params(config, rng, dtype=np.float32, scale=1.0):
    """Fan-in-scaled Gaussian kernels, zero biases."""
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = scale * np.sqrt(2.0 / fan_in)
            params[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return params


def extract_pyramid(image, params, config, branch_tag="SR"):
    """Run the encoder over an NCHW batch (values expected in [0, 1]).

    `params` maps names to autograd Tensors (or bare arrays for inference).
    Spatial dims must be multiples of 16; the caller is responsible for
    reflection padding and for padding companion maps consistently.
    """
    x = image if isinstance(image, ag.Tensor) else ag.Tensor(np.asarray(image))
    n, c, h, w = x.data.shape
    if c != 3:
        raise DataError(f"backbone expects 3 input channels, got {c}")
    if h < 16 or w < 16 or h % 16 or w % 16:
        raise DataError(f"input dims must be multiples of 16 and >= 16, got {h}x{w}")
    if config.input_size is not None and (h, w) != tuple(config.input_size):
        raise DataError(f"backbone fixed to {config.input_size}, got {h}x{w}")
    if not np.all(np.isfinite(x.data)):
        raise DataError("non-finite pixels in backbone input")

    def p(name):
        v = params[name]
        return v if isinstance(v, ag.Tensor) else ag.Tensor(v)

    stages = []
    for i, reps in enumerate(config.convs_per_stage, 1):
        for j in range(1, reps + 1):
            x = ag.relu(ag.conv2d(x, p(f"backbone.stage{i}.conv{j}.w"),
                                  p(f"backbone.stage{i}.conv{j}.b")))
        stages.append(x)
        if i < 5:
            x = ag.maxpool2x2(x)
    return FeaturePyramid(stages, branch_tag)


def save_backbone(path, params):
    """Write backbone arrays (Tensors or ndarrays) to a container file."""
    arrays = {}
    for name, v in params.items():
        if name.startswith("backbone."):
            arrays[name] = v.data if isinstance(v, ag.Tensor) else v
    save_arrays(path, arrays)


def load_pretrained(path, config):
    """Load backbone weights, validating names and shapes against config.

    Rejects missing arrays, unknown extras, and shape mismatches, naming
    the first offending array in declaration order.
    """
    arrays = load_arrays(path)
    expected = param_shapes(config)
    for name, shape in expected.items():
        if name not in arrays:
            raise DataError(f"pretrained file missing array {name!r}")
        if arrays[name].shape != shape:
            raise DataError(
                f"shape mismatch for {name!r}: file has {arrays[name].shape}, "
                f"config needs {shape}")
    extras = sorted(set(arrays) - set(expected))
    if extras:
        raise DataError(f"pretrained file has unknown array {extras[0]!r}")
    return {name: arrays[name] for name in expected}
