"""Shared fixtures and finite-difference helpers."""

from __future__ import annotations

import numpy as np
import pytest

from spqe import autograd as ag
from spqe.images import pad_to_multiple
from spqe.perception import resize_saliency
from spqe.synth import build_synthetic_manifest


@pytest.fixture(scope="session")
def small_benchmark(tmp_path_factory):
    """A 60-sample 32x32 synthetic dataset shared across test modules."""
    out = tmp_path_factory.mktemp("smallbench")
    manifest = build_synthetic_manifest(out, seed=7, n_hr=12, size=32)
    return manifest


@pytest.fixture(scope="session")
def small_benchmark_lr(tmp_path_factory):
    out = tmp_path_factory.mktemp("smallbench_lr")
    return build_synthetic_manifest(out, seed=9, n_hr=12, size=32, ref_kind="LR")


def seeded_images(seed, n, size=64):
    rng = np.random.default_rng(seed)
    return [rng.random((size, size, 3)).astype(np.float32) for _ in range(n)]


def numeric_grad(f, arrays, eps=1e-6):
    """Central-difference gradients of scalar f w.r.t. leaf tensors."""
    tensors = [ag.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)
               for a in arrays]
    loss = f(*tensors)
    ag.backward(loss)
    analytic = [t.grad.copy() for t in tensors]
    numeric = []
    with ag.no_grad():
        for t in tensors:
            g = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = float(f(*tensors).data)
                flat[i] = orig - eps
                lm = float(f(*tensors).data)
                flat[i] = orig
                gflat[i] = (lp - lm) / (2 * eps)
            numeric.append(g)
    return analytic, numeric


def max_rel_err(analytic, numeric, floor=1e-10):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        mask = np.maximum(np.abs(a), np.abs(n)) > floor
        if mask.any():
            worst = max(worst, float((np.abs(a - n) / denom)[mask].max()))
    return worst


def build_grad_batch(seed, n=2, size=8):
    """Images, references, saliency maps and targets for model grad checks."""
    rng = np.random.default_rng(seed)
    srs, refs, sals = [], [], []
    for _ in range(n):
        im = rng.random((size, size, 3))
        rf = rng.random((size, size, 3))
        p, _ = pad_to_multiple(im)
        q, _ = pad_to_multiple(rf)
        srs.append(p.transpose(2, 0, 1))
        refs.append(q.transpose(2, 0, 1))
        sals.append(rng.random(p.shape[:2]))
    gts = rng.uniform(0.15, 0.85, size=n)
    return np.stack(srs), np.stack(refs), sals, gts


def nudge_relu_margins(model, sr, ref, sals, margin=0.05):
    """Shift biases so every relu preactivation clears `margin` on the batch.

    Finite differences of a piecewise-linear network are only meaningful on
    a single linear piece; the adjusted biases are ordinary parameter values
    that keep every FD probe on the piece backprop differentiates.
    """
    from spqe import kernels

    x = np.concatenate([sr, ref]) if ref is not None else sr
    stages = []
    for i, reps in enumerate(model.config.convs_per_stage, 1):
        for j in range(1, reps + 1):
            w = model.params[f"backbone.stage{i}.conv{j}.w"]
            b = model.params[f"backbone.stage{i}.conv{j}.b"]
            z = kernels.conv2d_fwd(x, w.data, b.data)
            shift = np.maximum(0.0, margin - z.min(axis=(0, 2, 3)))
            b.data = b.data + shift
            z += shift[None, :, None, None]
            x = np.maximum(z, 0.0)
        stages.append(x)
        if i < 5:
            x, _ = kernels.maxpool2_fwd(x)

    def nudge_head(prefix, inp):
        h = inp
        for k in (1, 2):
            w = model.params[f"{prefix}.fc{k}.w"]
            b = model.params[f"{prefix}.fc{k}.b"]
            z = h @ w.data.T + b.data
            shift = np.maximum(0.0, margin - z.min(axis=0))
            b.data = b.data + shift
            z += shift
            h = np.maximum(z, 0.0)

    n = sr.shape[0]
    f_s = stages[4][:n]
    if ref is not None:
        diffs = [s[n:] - s[:n] for s in stages]
        for i, d in enumerate(diffs, 1):
            nudge_head(f"structure.head{i}", d.mean(axis=(2, 3)))
    if sals is not None:
        sal = resize_saliency(sals, f_s.shape[2:]).astype(f_s.dtype)
        nudge_head("perception.head", (f_s * sal).mean(axis=(2, 3)))
    nudge_head("weight.head", f_s.mean(axis=(2, 3)))
    return model
