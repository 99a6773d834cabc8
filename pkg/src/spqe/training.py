"""L1-objective training loop: Adam, validation-plateau LR decay, early
stopping, and best-validation checkpoint selection.

Batches group samples by padded resolution so each stacked batch is
rectangular; the per-group batch size is capped by a configurable memory
budget.  A fixed seed fixes image order, initialization and therefore the
whole loss trajectory.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .backbone import PRESETS
from .data import DatasetManifest
from .errors import DataError, NumericError
from .images import pad_to_multiple, read_image, to_nchw
from .model import SpqeModel
from .saliency import compute_saliency, sidecar_path

TRAIN_MODES = ("FULL", "STRUCTURE_ONLY", "PERCEPTION_ONLY", "FIXED_WEIGHT")


@dataclass
class TrainConfig:
    initial_lr: float = 1e-4
    lr_divisor: float = 10.0
    plateau_epochs: int = 5
    early_stop_patience: int = 30
    max_epochs: int = 60
    batch_size: int = 8
    memory_budget_mb: float = 512.0
    seed: int = 0
    mode: str = "FULL"
    fixed_weight: float | None = None
    multi_scale: bool = True
    use_saliency: bool = True
    backbone: str = "TINY"
    precision: str = "single"
    saliency_provider: str = "auto"

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise DataError(f"unknown training mode {self.mode!r}")
        if self.mode == "FIXED_WEIGHT" and (
                self.fixed_weight is None or not 0.0 <= self.fixed_weight <= 1.0):
            raise DataError("FIXED_WEIGHT mode needs fixed_weight in [0, 1]")
        if self.precision not in ("single", "double"):
            raise DataError(f"precision must be single or double, got {self.precision!r}")

    @classmethod
    def from_json(cls, path, overrides=None):
        cfg = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        if overrides:
            cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**cfg)

    def to_dict(self):
        return asdict(self)


class Adam:
    """Adaptive moment estimation over a named parameter dict."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(p.data.dtype, copy=False)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[k] / b1c
            vhat = self.v[k] / b2c
            p.data = p.data - (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


class PlateauSchedule:
    """Validation-driven LR decay and early stopping.

    The plateau counter resets on improvement and on each division; the
    early-stop counter resets only on improvement.  With a never-improving
    sequence after epoch 1, the LR is divided at epochs 6, 11, ... and
    training stops after `patience` stale epochs.
    """

    def __init__(self, initial_lr, divisor=10.0, plateau_epochs=5, patience=30):
        self.lr = float(initial_lr)
        self.divisor = float(divisor)
        self.plateau_epochs = plateau_epochs
        self.patience = patience
        self.best = np.inf
        self.since_improve = 0
        self.since_division = 0
        self.should_stop = False

    def update(self, val_loss):
        """Feed one epoch's validation loss; returns True on improvement."""
        if val_loss < self.best:
            self.best = val_loss
            self.since_improve = 0
            self.since_division = 0
            return True
        self.since_improve += 1
        self.since_division += 1
        if self.since_division >= self.plateau_epochs:
            self.lr /= self.divisor
            self.since_division = 0
        if self.since_improve >= self.patience:
            self.should_stop = True
        return False


# ---------------------------------------------------------------------------
# sample preparation and batching
# ---------------------------------------------------------------------------

@dataclass
class PreparedSample:
    sr: np.ndarray  # (3, H, W) padded
    ref: np.ndarray | None  # (3, h, w) padded, or None
    sal: np.ndarray | None  # (H, W) padded
    gt: float
    scale_factor: int
    ref_kind: str

    @property
    def group_key(self):
        ref_shape = self.ref.shape if self.ref is not None else None
        return (self.sr.shape, ref_shape, self.scale_factor, self.ref_kind)


def prepare_samples(manifest, use_saliency=True, provider="auto", use_ref=True):
    """Load, pad and cache every record of a manifest in memory."""
    out = []
    base = manifest.source if manifest.source is not None else None
    for rec in manifest.records:
        img = read_image(rec.sr_path)
        sr_p, _ = pad_to_multiple(img)
        sr = to_nchw(sr_p.astype(np.float32))[0]
        ref = None
        if use_ref and rec.ref_kind != "NONE" and rec.ref_path is not None:
            ref_img = read_image(rec.ref_path)
            if rec.ref_kind == "HR":
                ref_p, _ = pad_to_multiple(ref_img)
            else:
                th = -(-sr_p.shape[0] // rec.scale_factor)
                tw = -(-sr_p.shape[1] // rec.scale_factor)
                ph, pw = th - ref_img.shape[0], tw - ref_img.shape[1]
                if ph < 0 or pw < 0:
                    raise DataError(
                        f"{rec.sample_id}: LR reference larger than SR/scale grid")
                ref_p = np.pad(ref_img, ((0, ph), (0, pw), (0, 0)), mode="reflect") \
                    if (ph or pw) else ref_img
            ref = to_nchw(ref_p.astype(np.float32))[0]
        sal = None
        if use_saliency:
            spath = sidecar_path(base, rec.sample_id) if base is not None else None
            sal_map = compute_saliency(img, provider, spath).values
            sal, _ = pad_to_multiple(sal_map)
        out.append(PreparedSample(sr, ref, sal, rec.gt, rec.scale_factor, rec.ref_kind))
    return out


def group_batch_size(sample, config, model_channels):
    """Cap the per-group batch size by the activation memory budget."""
    h, w = sample.sr.shape[1:]
    acts = sum(c * (h >> i) * (w >> i) for i, c in enumerate(model_channels))
    branches = 2 if sample.ref is not None else 1
    bytes_per = acts * branches * 4 * 4  # act + grad + workspace headroom
    cap = max(1, int(config.memory_budget_mb * 1e6 / max(bytes_per, 1)))
    return max(1, min(config.batch_size, cap))


def make_batches(samples, config, model_channels, rng=None):
    """Resolution-grouped batches; order shuffled when an rng is given."""
    groups = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.group_key, []).append(i)
    batches = []
    for key in sorted(groups, key=repr):
        idx = groups[key]
        if rng is not None:
            idx = [idx[j] for j in rng.permutation(len(idx))]
        bs = group_batch_size(samples[idx[0]], config, model_channels)
        for k in range(0, len(idx), bs):
            batches.append(idx[k:k + bs])
    if rng is not None and len(batches) > 1:
        batches = [batches[j] for j in rng.permutation(len(batches))]
    return batches


def _stack_batch(samples, idx, dtype):
    sr = np.stack([samples[i].sr for i in idx]).astype(dtype, copy=False)
    first = samples[idx[0]]
    ref = None
    if first.ref is not None:
        ref = np.stack([samples[i].ref for i in idx]).astype(dtype, copy=False)
    sal = [samples[i].sal for i in idx] if first.sal is not None else None
    gts = np.array([samples[i].gt for i in idx], dtype=dtype)
    return sr, ref, sal, gts, first.scale_factor


def _epoch_loss(model, samples, batches, dtype):
    """Mean L1 over all samples without gradient tracking."""
    total = 0.0
    count = 0
    with ag.no_grad():
        for idx in batches:
            sr, ref, sal, gts, scale = _stack_batch(samples, idx, dtype)
            out = model.forward_batch(sr, ref, sal, scale, training=True)
            pred = out["s_spqe"].data
            total += float(np.abs(pred - gts).sum())
            count += len(idx)
    return total / count


def train(train_manifest, val_manifest, config, log_path=None, on_epoch=None):
    """Optimize a fresh model on the train split, monitor on val.

    Returns (model, log_rows, info): the model carries the best-validation
    parameters; log rows are dicts with epoch/train_l1/val_l1/lr.
    """
    if len(train_manifest) == 0 or len(val_manifest) == 0:
        raise DataError("training needs non-empty train and val splits")
    if config.mode == "STRUCTURE_ONLY":
        for rec in list(train_manifest.records) + list(val_manifest.records):
            if rec.ref_kind == "NONE" or rec.ref_path is None:
                raise DataError(
                    f"{rec.sample_id}: STRUCTURE_ONLY training requires references")

    dtype = np.float64 if config.precision == "double" else np.float32
    preset = PRESETS.get(config.backbone.upper())
    if preset is None:
        raise DataError(f"unknown backbone preset {config.backbone!r}")
    bcfg = preset()

    ref_kinds = {r.ref_kind for r in train_manifest.records}
    use_ref = config.mode != "PERCEPTION_ONLY" and ref_kinds != {"NONE"}
    ref_kind = "NONE"
    adapter_scales = ()
    if use_ref:
        kinds = ref_kinds - {"NONE"}
        if len(kinds) > 1:
            raise DataError(f"mixed reference kinds in training manifest: {sorted(kinds)}")
        ref_kind = kinds.pop()
        if ref_kind == "LR":
            adapter_scales = tuple(sorted({r.scale_factor
                                           for m in (train_manifest, val_manifest)
                                           for r in m.records if r.ref_kind == "LR"}))

    model = SpqeModel.create(bcfg, ref_kind=ref_kind, mode=config.mode,
                             fixed_weight=config.fixed_weight,
                             multi_scale=config.multi_scale,
                             use_saliency=config.use_saliency,
                             adapter_scales=adapter_scales,
                             seed=config.seed, dtype=dtype)

    train_samples = prepare_samples(train_manifest, config.use_saliency,
                                    config.saliency_provider, use_ref)
    val_samples = prepare_samples(val_manifest, config.use_saliency,
                                  config.saliency_provider, use_ref)
    val_batches = make_batches(val_samples, config, bcfg.stage_channels)

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params)
    schedule = PlateauSchedule(config.initial_lr, config.lr_divisor,
                               config.plateau_epochs, config.early_stop_patience)
    best_params = {k: p.data.copy() for k, p in model.params.items()}
    best_epoch = 0
    log_rows = []

    for epoch in range(1, config.max_epochs + 1):
        lr_used = schedule.lr
        batches = make_batches(train_samples, config, bcfg.stage_channels, rng)
        running = 0.0
        seen = 0
        for idx in batches:
            sr, ref, sal, gts, scale = _stack_batch(train_samples, idx, dtype)
            out = model.forward_batch(sr, ref, sal, scale, training=True)
            loss = ag.mean_all(ag.abs_(ag.sub(out["s_spqe"], ag.Tensor(gts))))
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            optimizer.zero_grad()
            ag.backward(loss)
            optimizer.step(lr_used)
            running += float(loss.data) * len(idx)
            seen += len(idx)
        train_l1 = running / seen
        val_l1 = _epoch_loss(model, val_samples, val_batches, dtype)
        if not np.isfinite(val_l1):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        improved = schedule.update(val_l1)
        if improved:
            best_params = {k: p.data.copy() for k, p in model.params.items()}
            best_epoch = epoch
        row = {"epoch": epoch, "train_l1": train_l1, "val_l1": val_l1, "lr": lr_used}
        log_rows.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if schedule.should_stop:
            break

    for k, p in model.params.items():
        p.data = best_params[k]
    info = {"best_epoch": best_epoch, "best_val_l1": schedule.best,
            "epochs_run": len(log_rows)}
    if log_path is not None:
        write_log(log_rows, log_path)
    return model, log_rows, info


def write_log(rows, path):
    lines = ["epoch,train_l1,val_l1,lr"]
    for r in rows:
        lines.append(f"{r['epoch']},{r['train_l1']!r},{r['val_l1']!r},{r['lr']!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_log(path):
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        e, t, v, lr = line.split(",")
        rows.append({"epoch": int(e), "train_l1": float(t), "val_l1": float(v),
                     "lr": float(lr)})
    return rows
