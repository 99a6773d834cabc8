"""Feature-pyramid encoder: shapes, determinism, parameter I/O, gradients."""

import numpy as np
import pytest

from spqe import autograd as ag
from spqe.backbone import (BackboneConfig, extract_pyramid, init_params,
                           load_pretrained, param_shapes, save_backbone, tiny,
                           vgg16_like)
from spqe.errors import DataError
from spqe.model import SpqeModel
from conftest import build_grad_batch, nudge_relu_margins


def test_tiny_stage_shapes():
    rng = np.random.default_rng(0)
    cfg = tiny()
    params = init_params(cfg, rng)
    img = rng.random((1, 3, 64, 64)).astype(np.float32)
    pyr = extract_pyramid(img, params, cfg)
    shapes = [tuple(s.data.shape) for s in pyr.stages]
    assert shapes == [(1, 8, 64, 64), (1, 16, 32, 32), (1, 32, 16, 16),
                      (1, 64, 8, 8), (1, 64, 4, 4)]


def test_vgg16_like_channels():
    cfg = vgg16_like()
    assert cfg.stage_channels == (64, 128, 256, 512, 512)
    assert cfg.convs_per_stage == (2, 2, 3, 3, 3)
    shapes = param_shapes(cfg)
    assert shapes["backbone.stage1.conv1.w"] == (64, 3, 3, 3)
    assert shapes["backbone.stage5.conv3.w"] == (512, 512, 3, 3)


def test_dyadic_schedule_sweep():
    rng = np.random.default_rng(1)
    cfg = tiny()
    params = init_params(cfg, rng)
    for h, w in [(16, 16), (32, 48), (80, 16), (64, 128)]:
        pyr = extract_pyramid(rng.random((1, 3, h, w)).astype(np.float32), params, cfg)
        for i, s in enumerate(pyr.stages):
            assert s.data.shape[2:] == (h >> i, w >> i)


def test_deterministic_bitwise():
    rng = np.random.default_rng(2)
    cfg = tiny()
    params = init_params(cfg, rng)
    img = rng.random((1, 3, 32, 32)).astype(np.float32)
    a = extract_pyramid(img, params, cfg)
    b = extract_pyramid(img, params, cfg)
    for sa, sb in zip(a.stages, b.stages):
        np.testing.assert_array_equal(sa.data, sb.data)


def test_zero_image_zero_biases_gives_zero_pyramid():
    rng = np.random.default_rng(3)
    cfg = tiny()
    params = init_params(cfg, rng)  # biases start at zero
    pyr = extract_pyramid(np.zeros((1, 3, 32, 32), np.float32), params, cfg)
    for s in pyr.stages:
        assert np.all(s.data == 0.0)


def test_input_validation():
    rng = np.random.default_rng(4)
    cfg = tiny()
    params = init_params(cfg, rng)
    with pytest.raises(DataError, match="3 input channels"):
        extract_pyramid(np.zeros((1, 1, 32, 32), np.float32), params, cfg)
    with pytest.raises(DataError, match="multiples of 16"):
        extract_pyramid(np.zeros((1, 3, 30, 32), np.float32), params, cfg)
    bad = np.zeros((1, 3, 32, 32), np.float32)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(DataError, match="non-finite"):
        extract_pyramid(bad, params, cfg)


def test_fixed_input_size_policy():
    rng = np.random.default_rng(5)
    cfg = BackboneConfig((8, 16, 32, 64, 64), (1, 1, 1, 1, 1), 3,
                         input_size=(64, 64), preset="TINY")
    params = init_params(cfg, rng)
    extract_pyramid(rng.random((1, 3, 64, 64)).astype(np.float32), params, cfg)
    with pytest.raises(DataError, match="fixed"):
        extract_pyramid(rng.random((1, 3, 32, 32)).astype(np.float32), params, cfg)


def test_translation_covariance_interior():
    rng = np.random.default_rng(6)
    cfg = tiny()
    params = init_params(cfg, rng)
    img = rng.random((64, 64, 3)).astype(np.float32)
    rolled = np.roll(img, 16, axis=1)
    f = extract_pyramid(img.transpose(2, 0, 1)[None], params, cfg).stages[0].data
    g = extract_pyramid(rolled.transpose(2, 0, 1)[None], params, cfg).stages[0].data
    band = 20  # shift + conv margin; compare interior only
    np.testing.assert_allclose(np.roll(f, 16, axis=3)[..., band:-band],
                               g[..., band:-band], atol=1e-5)


class TestParameterIO:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        cfg = tiny()
        params = init_params(cfg, rng)
        save_backbone(tmp_path / "bb.bin", params)
        loaded = load_pretrained(tmp_path / "bb.bin", cfg)
        for name in params:
            np.testing.assert_array_equal(loaded[name], params[name])

    def test_wrong_config_names_first_mismatch(self, tmp_path):
        rng = np.random.default_rng(8)
        save_backbone(tmp_path / "tiny.bin", init_params(tiny(), rng))
        # independent shape walk: first mismatching array in declaration order
        tiny_shapes = param_shapes(tiny())
        vgg_shapes = param_shapes(vgg16_like())
        first = next(n for n in vgg_shapes
                     if tiny_shapes.get(n) != vgg_shapes[n])
        with pytest.raises(DataError) as err:
            load_pretrained(tmp_path / "tiny.bin", vgg16_like())
        assert first in str(err.value)

    def test_extra_array_rejected(self, tmp_path):
        from spqe.container import save_arrays

        rng = np.random.default_rng(9)
        params = init_params(tiny(), rng)
        params["backbone.stage9.conv1.w"] = np.zeros((1, 1, 3, 3), np.float32)
        save_arrays(tmp_path / "bb.bin", params)
        with pytest.raises(DataError, match="unknown array"):
            load_pretrained(tmp_path / "bb.bin", tiny())

    def test_missing_array_rejected(self, tmp_path):
        from spqe.container import save_arrays

        rng = np.random.default_rng(10)
        params = init_params(tiny(), rng)
        params.pop("backbone.stage3.conv1.b")
        save_arrays(tmp_path / "bb.bin", params)
        with pytest.raises(DataError, match="missing array"):
            load_pretrained(tmp_path / "bb.bin", tiny())


def test_every_kernel_gradient_matches_finite_differences():
    """Sum of stage-5 outputs: analytic vs central differences, all params.

    Biases are nudged so relu preactivations clear a margin, and pool
    selections are frozen across probes; both keep every probe on the
    linear piece backprop differentiates (step 1e-4, float64).
    """
    model = SpqeModel.create(tiny(), ref_kind="HR", seed=1, dtype=np.float64)
    sr, _, _, _ = build_grad_batch(1001, n=1, size=8)
    nudge_relu_margins(model, sr, None, None)

    names = list(param_shapes(model.config))
    freezer = ag.PoolFreeze()

    def loss_value():
        with ag.freeze_pools(freezer):
            pyr = extract_pyramid(sr, model.params, model.config)
            return ag.sum_all(pyr.stages[4])

    loss = loss_value()
    ag.backward(loss)
    grads = {k: model.params[k].grad.copy() for k in names}
    eps = 1e-4
    worst = 0.0
    with ag.no_grad():
        for name in names:
            flat = model.params[name].data.reshape(-1)
            gflat = grads[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = float(loss_value().data)
                flat[i] = orig - eps
                lm = float(loss_value().data)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                denom = max(abs(gflat[i]), abs(fd))
                if denom > 1e-12:
                    worst = max(worst, abs(gflat[i] - fd) / denom)
    assert worst < 1e-4, f"worst relative error {worst}"
