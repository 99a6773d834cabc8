"""Hot numeric kernels with switchable backends.

The numba backend is the default whenever numba imports cleanly; set
SPQE_BACKEND=numpy (or =numba) to force a path.  `use_backend` switches at
runtime, which the kernel benchmark and the parity tests rely on.  Both
backends implement identical contracts; float32 results may differ in the
last bits because summation order differs.
"""

from __future__ import annotations

import os

from . import numpy_backend

_KERNEL_NAMES = (
    "conv2d_fwd",
    "conv2d_bwd_x",
    "conv2d_bwd_w",
    "convt2d_fwd",
    "convt2d_bwd",
    "maxpool2_fwd",
    "maxpool2_bwd",
    "bilinear_resize",
    "edge_widths",
)

_active = {name: getattr(numpy_backend, name) for name in _KERNEL_NAMES}
_active_name = "numpy"


def available_backends():
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.append("numba")
    except ImportError:
        pass
    return names


def use_backend(name):
    """Select the kernel implementation: 'numpy' or 'numba'."""
    global _active_name
    if name == "numpy":
        mod = numpy_backend
    elif name == "numba":
        from . import numba_backend as mod
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for key in _KERNEL_NAMES:
        _active[key] = getattr(mod, key)
    _active_name = name


def backend_name():
    return _active_name


def conv2d_fwd(x, w, b):
    return _active["conv2d_fwd"](x, w, b)


def conv2d_bwd_x(w, dy):
    return _active["conv2d_bwd_x"](w, dy)


def conv2d_bwd_w(x, dy, k):
    return _active["conv2d_bwd_w"](x, dy, k)


def convt2d_fwd(x, w, b, stride):
    return _active["convt2d_fwd"](x, w, b, stride)


def convt2d_bwd(x, w, dy, stride):
    return _active["convt2d_bwd"](x, w, dy, stride)


def maxpool2_fwd(x):
    return _active["maxpool2_fwd"](x)


def maxpool2_bwd(dy, idx):
    return _active["maxpool2_bwd"](dy, idx)


def bilinear_resize(img, oh, ow):
    return _active["bilinear_resize"](img, oh, ow)


def edge_widths(gray, grad, mask, axis):
    return _active["edge_widths"](gray, grad, mask, axis)


_requested = os.environ.get("SPQE_BACKEND", "").strip().lower()
if _requested:
    use_backend(_requested)
elif "numba" in available_backends():
    use_backend("numba")
