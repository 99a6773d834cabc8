"""Finite-difference verification of every autograd op, plus graph rules."""

import numpy as np
import pytest

from spqe import autograd as ag
from conftest import max_rel_err, numeric_grad

TOL = 1e-5


def check(f, arrays, tol=TOL, eps=1e-6):
    analytic, numeric = numeric_grad(f, arrays, eps)
    assert max_rel_err(analytic, numeric, floor=1e-8) < tol


def test_elementwise_chain():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4))
    check(lambda a, b: ag.mean_all(ag.mul(ag.add(a, b), ag.sub(a, b))), [a, b])


def test_abs_away_from_kink():
    a = np.array([0.5, -0.7, 1.2, -2.0])
    check(lambda a: ag.mean_all(ag.abs_(a)), [a])


def test_broadcast_mul():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 4, 4))
    s = rng.random((2, 1, 4, 4)) + 0.1
    check(lambda x: ag.mean_all(ag.mul(x, ag.Tensor(s))), [x])
    # scalar broadcast
    check(lambda x: ag.mean_all(ag.mul(0.37, x)), [x])


def test_relu_with_margin():
    # values kept away from the kink so FD stays on one piece
    a = np.array([[0.5, -0.4], [1.3, -2.2]])
    check(lambda a: ag.mean_all(ag.relu(a)), [a])


def test_sigmoid_and_linear():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((3, 6)) * 0.5
    b = rng.standard_normal(3) * 0.1
    check(lambda x, w, b: ag.mean_all(ag.sigmoid(ag.linear(x, w, b))), [x, w, b])


def test_softmax_matvec_stack():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal(5)
    cols = [rng.standard_normal(4) for _ in range(5)]

    def f(logits, *cols):
        w = ag.softmax1d(logits)
        m = ag.stack_cols(list(cols))
        s = ag.matvec(m, w)
        return ag.mean_all(ag.mul(s, s))

    check(f, [logits] + cols)


def test_softmax_partition_of_unity():
    rng = np.random.default_rng(4)
    for _ in range(20):
        w = ag.softmax1d(ag.Tensor(rng.standard_normal(5) * 3)).data
        assert abs(w.sum() - 1.0) < 1e-12
        assert (w > 0).all()


def test_conv2d_grad():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 6, 6)) * 0.5
    w = rng.standard_normal((4, 3, 3, 3)) * 0.4
    b = rng.standard_normal(4) * 0.1
    check(lambda x, w, b: ag.mean_all(ag.mul(ag.conv2d(x, w, b),
                                             ag.conv2d(x, w, b))), [x, w, b])


def test_conv_transpose2d_grad():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((1, 3, 5, 5)) * 0.5
    w = rng.standard_normal((3, 2, 4, 4)) * 0.4
    b = rng.standard_normal(2) * 0.1

    def f(x, w, b):
        y = ag.conv_transpose2d(x, w, b, 2)
        return ag.mean_all(ag.mul(y, y))

    check(f, [x, w, b])


def test_center_crop_grad():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 2, 7, 9))
    check(lambda x: ag.mean_all(ag.mul(ag.center_crop(x, 4, 5),
                                       ag.center_crop(x, 4, 5))), [x])


def test_maxpool_grad_with_margins():
    # distinct window values; FD probes cannot flip the argmax
    rng = np.random.default_rng(8)
    x = rng.permutation(64).astype(np.float64).reshape(1, 1, 8, 8)
    check(lambda x: ag.mean_all(ag.mul(ag.maxpool2x2(x), ag.maxpool2x2(x))), [x])


def test_maxpool_routes_to_argmax():
    x = ag.Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), requires_grad=True)
    y = ag.maxpool2x2(x)
    ag.backward(ag.mean_all(y))
    expect = np.zeros((1, 1, 2, 2))
    expect[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(x.grad, expect)


def test_global_avg_pool_matches_loop():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 3, 5, 4))
    out = ag.global_avg_pool(ag.Tensor(x)).data
    for n in range(2):
        for c in range(3):
            acc = 0.0
            for i in range(5):
                for j in range(4):
                    acc += x[n, c, i, j]
            assert out[n, c] == pytest.approx(acc / 20, abs=1e-12)
    check(lambda x: ag.mean_all(ag.mul(ag.global_avg_pool(x),
                                       ag.global_avg_pool(x))), [x])


def test_shared_parameter_accumulates():
    # same tensor used twice (siamese): gradients must sum over both uses
    w = ag.Tensor(np.array([2.0]), requires_grad=True)
    y = ag.add(ag.mul(w, 3.0), ag.mul(w, 4.0))
    ag.backward(ag.mean_all(y))
    assert w.grad[0] == pytest.approx(7.0)


def test_no_grad_builds_no_graph():
    w = ag.Tensor(np.ones(3), requires_grad=True)
    with ag.no_grad():
        y = ag.mul(w, 2.0)
    assert y._parents == ()


def test_backward_requires_scalar():
    w = ag.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ag.backward(ag.mul(w, 2.0))


def test_pool_freeze_reuses_indices():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((1, 1, 4, 4))
    freezer = ag.PoolFreeze()
    with ag.freeze_pools(freezer):
        y0 = ag.maxpool2x2(ag.Tensor(x)).data
    # tamper: push one runner-up above the recorded max; frozen pass must
    # keep selecting the recorded positions
    x2 = x.copy()
    x2[0, 0, 0, 0] = x.max() + 10.0
    with ag.freeze_pools(freezer):
        y1 = ag.maxpool2x2(ag.Tensor(x2)).data
    idx = freezer.indices[0][0, 0, 0, 0]
    if idx != 0:
        assert y1[0, 0, 0, 0] == y0[0, 0, 0, 0]
    else:
        assert y1[0, 0, 0, 0] == pytest.approx(x.max() + 10.0)
