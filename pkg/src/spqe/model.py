"""Score fusion, the composed scoring model, and checkpoint I/O.

A model owns the shared backbone, the five per-scale structure heads with
their softmax scale weights, the perception head, the adaptive weight head,
and (in LR mode) one upsampling adapter per scale factor.  Checkpoints are
directories: config.json (architecture), weights.bin (named float32
arrays), meta.json (training provenance).
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import autograd as ag
from .backbone import (BackboneConfig, PRESETS, extract_pyramid, init_params,
                       param_shapes)
from .container import load_arrays, save_arrays
from .data import SampleRecord, ScoreBundle
from .errors import DataError, NumericError
from .images import pad_to_multiple, read_image, to_nchw
from .perception import (init_perception_head, perception_head_shapes,
                         perception_score_from_features, resize_saliency,
                         saliency_gate)
from .saliency import compute_saliency, sidecar_path
from .structure import (adapt_reference, adapter_param_shapes,
                        combine_scale_scores, fuse_difference, init_adapter,
                        init_structure_heads, scale_scores,
                        structure_head_shapes)
from .weighting import init_weight_head, perception_weight, weight_head_shapes
from .heads import apply_head

MODES = ("FULL", "STRUCTURE_ONLY", "PERCEPTION_ONLY", "FIXED_WEIGHT")
FORMAT_VERSION = 1


def fuse_scores(s_p, s_s, w_p):
    """Convex fusion of the perception and structure scores."""
    for name, v in (("s_p", s_p), ("s_s", s_s), ("w_p", w_p)):
        if not np.all(np.isfinite(v)):
            raise NumericError(f"{name} is not finite: {v}")
    if np.any(np.asarray(w_p) < 0.0) or np.any(np.asarray(w_p) > 1.0):
        raise DataError(f"w_p {w_p} outside [0, 1]")
    return w_p * s_p + (1.0 - w_p) * s_s


def l1_loss(preds, gts):
    """Mean absolute prediction error."""
    p = np.asarray(preds, dtype=np.float64).ravel()
    g = np.asarray(gts, dtype=np.float64).ravel()
    if p.size != g.size:
        raise DataError(f"length mismatch: {p.size} preds vs {g.size} targets")
    if p.size == 0:
        raise DataError("l1_loss needs at least one pair")
    return float(np.mean(np.abs(p - g)))


def full_param_shapes(config, adapter_scales=()):
    """Every trainable array of a model, in checkpoint order."""
    shapes = dict(param_shapes(config))
    shapes.update(structure_head_shapes(config.stage_channels))
    shapes.update(perception_head_shapes(config.stage_channels[4]))
    shapes.update(weight_head_shapes(config.stage_channels[4]))
    for s in sorted(adapter_scales):
        shapes.update(adapter_param_shapes(s))
    return shapes


class SpqeModel:
    """The composed quality model plus its architecture/mode settings."""

    def __init__(self, config, params, ref_kind="HR", mode="FULL",
                 fixed_weight=None, multi_scale=True, use_saliency=True,
                 adapter_scales=()):
        if mode not in MODES:
            raise DataError(f"unknown mode {mode!r}")
        if mode == "FIXED_WEIGHT":
            if fixed_weight is None or not 0.0 <= fixed_weight <= 1.0:
                raise DataError("FIXED_WEIGHT mode needs fixed_weight in [0, 1]")
        self.config = config
        self.ref_kind = ref_kind
        self.mode = mode
        self.fixed_weight = fixed_weight
        self.multi_scale = multi_scale
        self.use_saliency = use_saliency
        self.adapter_scales = tuple(sorted(adapter_scales))
        self.params = {name: value if isinstance(value, ag.Tensor)
                       else ag.Tensor(np.asarray(value), requires_grad=True)
                       for name, value in params.items()}
        expected = full_param_shapes(config, self.adapter_scales)
        for name, shape in expected.items():
            if name not in self.params:
                raise DataError(f"missing parameter {name!r}")
            if self.params[name].data.shape != shape:
                raise DataError(
                    f"parameter {name!r} has shape {self.params[name].data.shape}, "
                    f"expected {shape}")

    # -- construction -----------------------------------------------------

    @classmethod
    def create(cls, config, ref_kind="HR", mode="FULL", fixed_weight=None,
               multi_scale=True, use_saliency=True, adapter_scales=(),
               seed=0, dtype=np.float32, init_scale=1.0):
        rng = np.random.default_rng(seed)
        params = init_params(config, rng, dtype, init_scale)
        params.update(init_structure_heads(config.stage_channels, rng, dtype, init_scale))
        params.update(init_perception_head(config.stage_channels[4], rng, dtype, init_scale))
        params.update(init_weight_head(config.stage_channels[4], rng, dtype, init_scale))
        for s in sorted(adapter_scales):
            adapter = init_adapter(s, rng, dtype)
            if init_scale == 0.0:
                adapter = {k: np.zeros_like(v) for k, v in adapter.items()}
            params.update(adapter)
        return cls(config, params, ref_kind, mode, fixed_weight, multi_scale,
                   use_saliency, adapter_scales)

    @property
    def dtype(self):
        return self.params["backbone.stage1.conv1.w"].data.dtype

    def astype(self, dtype):
        """Copy of this model with parameters cast to dtype."""
        params = {k: v.data.astype(dtype) for k, v in self.params.items()}
        return SpqeModel(self.config, params, self.ref_kind, self.mode,
                         self.fixed_weight, self.multi_scale, self.use_saliency,
                         self.adapter_scales)

    # -- forward ----------------------------------------------------------

    def forward_batch(self, sr, ref=None, sal_maps=None, scale_factor=1,
                      training=False, ref_kind=None):
        """Score a padded NCHW batch; returns a dict of (N,) tensors.

        Unused branches are skipped while training (e.g. the reference
        branch in PERCEPTION_ONLY mode); prediction fills in everything it
        can for reporting.
        """
        sr_t = sr if isinstance(sr, ag.Tensor) else ag.Tensor(
            np.asarray(sr, dtype=self.dtype))
        n = sr_t.data.shape[0]
        if ref_kind is None:
            ref_kind = self.ref_kind if self.ref_kind != "NONE" else "HR"
        need_struct = ref is not None and not (training and self.mode == "PERCEPTION_ONLY")
        need_percep = not (training and self.mode == "STRUCTURE_ONLY")
        need_weight = self.mode == "FULL" or (not training and self.mode != "FIXED_WEIGHT")

        pyr_s = extract_pyramid(sr_t, self.params, self.config, "SR")

        s_s = None
        if need_struct:
            adapted = adapt_reference(ref, ref_kind, scale_factor, self.params,
                                      sr_t.data.shape[2:])
            pyr_r = extract_pyramid(adapted, self.params, self.config, "REF")
            scores = scale_scores(fuse_difference(pyr_r, pyr_s), self.params)
            s_s = combine_scale_scores(scores, self.params, self.multi_scale)

        s_p = None
        if need_percep:
            if self.use_saliency and sal_maps is None:
                raise DataError("saliency maps required when the gate is enabled")
            s_p = perception_score_from_features(pyr_s.f_s, sal_maps, self.params,
                                                 self.use_saliency)

        w_p = perception_weight(pyr_s.f_s, self.params) if need_weight else None

        fused = self._fuse(s_p, s_s, w_p, n)
        return {"s_s": s_s, "s_p": s_p, "w_p": w_p, "s_spqe": fused}

    def _fuse(self, s_p, s_s, w_p, n):
        if self.mode == "STRUCTURE_ONLY":
            return s_s
        if self.mode == "PERCEPTION_ONLY" or s_s is None:
            return s_p
        if self.mode == "FIXED_WEIGHT":
            w = float(self.fixed_weight)
            return ag.add(ag.mul(w, s_p), ag.mul(1.0 - w, s_s))
        return ag.add(ag.mul(w_p, s_p), ag.mul(ag.sub(1.0, w_p), s_s))

    # -- single-sample prediction ------------------------------------------

    def prepare_images(self, sr_img, ref_img=None, ref_kind="HR",
                       sal_map=None, saliency_provider="auto", sal_path=None,
                       scale_factor=1):
        """Pad and stack one sample's arrays for forward_batch."""
        sr_p, _ = pad_to_multiple(sr_img)
        sr = to_nchw(sr_p.astype(self.dtype))
        ref = None
        if ref_img is not None and ref_kind != "NONE":
            if ref_kind == "HR":
                ref_p, _ = pad_to_multiple(ref_img)
            else:
                lr_side = -(-sr_p.shape[0] // scale_factor), -(-sr_p.shape[1] // scale_factor)
                pad_h = lr_side[0] - ref_img.shape[0]
                pad_w = lr_side[1] - ref_img.shape[1]
                if pad_h < 0 or pad_w < 0:
                    raise DataError(
                        f"LR reference {ref_img.shape[:2]} larger than SR/scale grid {lr_side}")
                ref_p = np.pad(ref_img, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect") \
                    if (pad_h or pad_w) else ref_img
            ref = to_nchw(ref_p.astype(self.dtype))
        sal = None
        if self.use_saliency:
            if sal_map is None:
                sal_map = compute_saliency(sr_img, saliency_provider, sal_path).values
            sal_p, _ = pad_to_multiple(sal_map)
            sal = [sal_p]
        return sr, ref, sal

    def predict_images(self, sr_img, ref_img=None, ref_kind="NONE",
                       scale_factor=1, sal_map=None, sal_path=None):
        """ScoreBundle for one sample given in-memory images."""
        if ref_kind != "NONE" and ref_img is None:
            raise DataError(f"ref_kind {ref_kind} requires a reference image")
        if self.mode == "STRUCTURE_ONLY" and (ref_img is None or ref_kind == "NONE"):
            raise DataError("structure-only model needs a reference image")
        if ref_kind == "LR" and f"adapter.s{scale_factor}.w" not in self.params:
            raise DataError(f"no adapter trained for scale factor {scale_factor}")
        if ref_kind != "NONE" and self.ref_kind != "NONE" and ref_kind != self.ref_kind:
            raise DataError(
                f"model was trained with {self.ref_kind} references, sample has {ref_kind}")
        with ag.no_grad():
            sr, ref, sal = self.prepare_images(sr_img, ref_img, ref_kind,
                                               sal_map=sal_map, sal_path=sal_path,
                                               scale_factor=scale_factor)
            out = self.forward_batch(sr, ref, sal, scale_factor, ref_kind=ref_kind)
        s_p = float(out["s_p"].data[0])
        s_s = float(out["s_s"].data[0]) if out["s_s"] is not None else None
        fused = float(out["s_spqe"].data[0])
        if self.mode == "FIXED_WEIGHT":
            w_p = float(self.fixed_weight)
        elif self.mode == "STRUCTURE_ONLY":
            w_p = 0.0
        elif s_s is None:
            # reference-free: fused score is the perception score by contract
            w_p = float(out["w_p"].data[0]) if out["w_p"] is not None else 1.0
            fused = s_p
        elif self.mode == "PERCEPTION_ONLY":
            w_p = 1.0
        else:
            w_p = float(out["w_p"].data[0])
        return ScoreBundle(s_p=s_p, w_p=w_p, s_spqe=fused, s_s=s_s)

    def predict_record(self, record: SampleRecord, manifest_dir=None):
        sr_img = read_image(record.sr_path)
        ref_img = None
        if record.ref_kind != "NONE" and record.ref_path is not None:
            ref_img = read_image(record.ref_path)
        sal_dir = manifest_dir if manifest_dir is not None else record.sr_path.parent
        sal_path = sidecar_path(sal_dir, record.sample_id)
        return self.predict_images(sr_img, ref_img, record.ref_kind,
                                   record.scale_factor, sal_path=sal_path)

    # -- checkpointing ------------------------------------------------------

    def save(self, ckpt_dir, meta=None):
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        cfg = {
            "format_version": FORMAT_VERSION,
            "backbone": {
                "stage_channels": list(self.config.stage_channels),
                "convs_per_stage": list(self.config.convs_per_stage),
                "kernel_size": self.config.kernel_size,
                "activation": self.config.activation,
                "input_size": list(self.config.input_size) if self.config.input_size else None,
                "preset": self.config.preset,
            },
            "ref_kind": self.ref_kind,
            "mode": self.mode,
            "fixed_weight": self.fixed_weight,
            "multi_scale": self.multi_scale,
            "use_saliency": self.use_saliency,
            "adapter_scales": list(self.adapter_scales),
        }
        (ckpt_dir / "config.json").write_text(json.dumps(cfg, indent=2) + "\n",
                                              encoding="utf-8")
        ordered = full_param_shapes(self.config, self.adapter_scales)
        save_arrays(ckpt_dir / "weights.bin",
                    {name: self.params[name].data for name in ordered})
        (ckpt_dir / "meta.json").write_text(
            json.dumps(meta or {}, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, ckpt_dir):
        ckpt_dir = Path(ckpt_dir)
        cfg_path = ckpt_dir / "config.json"
        if not cfg_path.is_file():
            raise DataError(f"not a checkpoint directory: {ckpt_dir}")
        cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
        if cfg.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported checkpoint version {cfg.get('format_version')}")
        b = cfg["backbone"]
        config = BackboneConfig(tuple(b["stage_channels"]), tuple(b["convs_per_stage"]),
                                b["kernel_size"], b["activation"],
                                tuple(b["input_size"]) if b["input_size"] else None,
                                b.get("preset", "custom"))
        params = load_arrays(ckpt_dir / "weights.bin")
        return cls(config, params, cfg["ref_kind"], cfg["mode"], cfg["fixed_weight"],
                   cfg["multi_scale"], cfg["use_saliency"], tuple(cfg["adapter_scales"]))

    @staticmethod
    def load_meta(ckpt_dir):
        path = Path(ckpt_dir) / "meta.json"
        if not path.is_file():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))
