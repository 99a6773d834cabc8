"""Backend parity: the numba kernels must agree with the numpy fallbacks."""

import numpy as np
import pytest

from spqe import kernels
from spqe.kernels import numpy_backend

HAVE_NUMBA = "numba" in kernels.available_backends()

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")


@pytest.fixture(autouse=True)
def restore_backend():
    prev = kernels.backend_name()
    yield
    kernels.use_backend(prev)


def _both(fn_name, *args):
    kernels.use_backend("numba")
    a = kernels._active[fn_name](*args)
    b = getattr(numpy_backend, fn_name)(*args)
    return a, b


@pytest.mark.parametrize("shape,cout", [((2, 3, 16, 16), 8), ((3, 8, 8, 8), 16),
                                        ((1, 16, 4, 4), 32)])
def test_conv2d_parity(shape, cout):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape)
    w = rng.standard_normal((cout, shape[1], 3, 3))
    b = rng.standard_normal(cout)
    dy = rng.standard_normal((shape[0], cout) + shape[2:])
    ya, yb = _both("conv2d_fwd", x, w, b)
    np.testing.assert_allclose(ya, yb, atol=1e-12)
    dxa, dxb = _both("conv2d_bwd_x", w, dy)
    np.testing.assert_allclose(dxa, dxb, atol=1e-12)
    (dwa, dba), (dwb, dbb) = _both("conv2d_bwd_w", x, dy, 3)
    np.testing.assert_allclose(dwa, dwb, atol=1e-11)
    np.testing.assert_allclose(dba, dbb, atol=1e-11)


@pytest.mark.parametrize("stride", [2, 3])
def test_convt2d_parity(stride):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 7, 5))
    w = rng.standard_normal((3, 4, 2 * stride, 2 * stride))
    b = rng.standard_normal(4)
    ya, yb = _both("convt2d_fwd", x, w, b, stride)
    assert ya.shape == (2, 4, 6 * stride + 2 * stride, 4 * stride + 2 * stride)
    np.testing.assert_allclose(ya, yb, atol=1e-12)
    dy = rng.standard_normal(ya.shape)
    ga, gb = _both("convt2d_bwd", x, w, dy, stride)
    for u, v in zip(ga, gb):
        np.testing.assert_allclose(u, v, atol=1e-11)


def test_maxpool_parity_and_tie_rule():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 8, 8))
    (ya, ia), (yb, ib) = _both("maxpool2_fwd", x)
    np.testing.assert_array_equal(ya, yb)
    np.testing.assert_array_equal(ia, ib)
    # exact ties resolve to the first maximum in scan order on both backends
    t = np.zeros((1, 1, 2, 2))
    (_, ia), (_, ib) = _both("maxpool2_fwd", t)
    assert ia[0, 0, 0, 0] == 0 == ib[0, 0, 0, 0]
    dy = rng.standard_normal(ya.shape)
    dxa, dxb = _both("maxpool2_bwd", dy, ia)
    np.testing.assert_array_equal(dxa, dxb)


def test_bilinear_resize_parity_and_identities():
    rng = np.random.default_rng(3)
    img = rng.standard_normal((12, 20))
    ra, rb = _both("bilinear_resize", img, 5, 9)
    np.testing.assert_allclose(ra, rb, atol=1e-12)
    # same-size resize is the identity; constant maps stay constant
    same, _ = _both("bilinear_resize", img, 12, 20)
    np.testing.assert_allclose(same, img, atol=1e-12)
    const = np.full((9, 9), 0.37)
    out, _ = _both("bilinear_resize", const, 3, 4)
    np.testing.assert_allclose(out, 0.37, atol=1e-12)


def test_edge_widths_parity():
    rng = np.random.default_rng(4)
    gray = np.cumsum(rng.random((16, 16)), axis=1)
    grad = np.gradient(gray, axis=1)
    mask = np.abs(grad) > np.abs(grad).max() * 0.5
    for axis in (0, 1):
        (ta, ca), (tb, cb) = _both("edge_widths", gray, grad, mask, axis)
        assert ca == cb
        assert ta == pytest.approx(tb)


def test_float32_paths_close():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 4, 16, 16)).astype(np.float32)
    w = rng.standard_normal((8, 4, 3, 3)).astype(np.float32)
    b = rng.standard_normal(8).astype(np.float32)
    ya, yb = _both("conv2d_fwd", x, w, b)
    assert ya.dtype == np.float32 and yb.dtype == np.float32
    np.testing.assert_allclose(ya, yb, rtol=1e-4, atol=1e-5)


def test_backend_selection_roundtrip():
    kernels.use_backend("numpy")
    assert kernels.backend_name() == "numpy"
    kernels.use_backend("numba")
    assert kernels.backend_name() == "numba"
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
