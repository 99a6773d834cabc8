"""Command-line entry point.

Subcommands: synth, train, predict, eval, ablate, correlate, plot.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .data import SplitSpec, load_manifest, split_dataset
from .errors import DataError, NumericError, UsageError
from .evaluation import (ablation_suite, config_hash, correlation_study,
                         cross_dataset, eval_checkpoint)
from .images import read_image
from .model import SpqeModel
from .saliency import load_saliency_file
from .synth import build_synthetic_manifest
from .training import TrainConfig, train, write_log


def _add_common(p, *names):
    flags = {
        "manifest": lambda: p.add_argument("--manifest", required=True,
                                           help="dataset manifest CSV"),
        "manifests": lambda: p.add_argument("--manifest", action="append",
                                            required=True, dest="manifests",
                                            help="dataset manifest CSV (repeatable)"),
        "ckpt": lambda: p.add_argument("--ckpt", required=True,
                                       help="checkpoint directory"),
        "config": lambda: p.add_argument("--config", default=None,
                                         help="JSON training config (flag > file > default)"),
        "seed": lambda: p.add_argument("--seed", type=int, default=None,
                                       help="seed for splits/init/shuffling"),
        "mode": lambda: p.add_argument("--mode", default=None,
                                       choices=["FULL", "STRUCTURE_ONLY",
                                                "PERCEPTION_ONLY", "FIXED_WEIGHT"],
                                       help="training mode"),
        "fixed-weight": lambda: p.add_argument("--fixed-weight", type=float,
                                               default=None,
                                               help="perception weight for FIXED_WEIGHT mode"),
        "out-dir": lambda: p.add_argument("--out-dir", required=True,
                                          help="output directory"),
        "logistic-fit": lambda: p.add_argument("--logistic-fit", action="store_true",
                                               help="fit a 4-parameter logistic before PLCC"),
        "precision": lambda: p.add_argument("--precision", default=None,
                                            choices=["single", "double"],
                                            help="compute precision"),
    }
    for n in names:
        flags[n]()


def build_parser():
    parser = argparse.ArgumentParser(prog="spqe",
                                     description="SR image quality scoring tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="build the synthetic benchmark dataset")
    _add_common(p, "out-dir")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-hr", type=int, default=60, help="number of base HR images")
    p.add_argument("--size", type=int, default=64, help="HR image side (multiple of 16)")
    p.add_argument("--ref-kind", default="HR", choices=["HR", "LR", "NONE"],
                   help="reference type recorded in the manifest")

    p = sub.add_parser("train", help="train a model on a manifest")
    _add_common(p, "manifest", "out-dir", "config", "seed", "mode",
                "fixed-weight", "precision")

    p = sub.add_parser("predict", help="score one SR image")
    _add_common(p, "ckpt")
    p.add_argument("--sr", required=True, help="SR image path")
    p.add_argument("--ref", default=None, help="reference image path")
    p.add_argument("--ref-kind", default=None, choices=["HR", "LR"],
                   help="reference type (default HR when --ref is given)")
    p.add_argument("--scale", type=int, default=2, help="scale factor for LR references")
    p.add_argument("--saliency", default=None, help="optional saliency map file")

    p = sub.add_parser("eval", help="evaluate a checkpoint on manifest(s)")
    _add_common(p, "ckpt", "manifests", "logistic-fit")
    p.add_argument("--out-dir", default=None, help="where to write report/scatter CSVs")
    p.add_argument("--split", default="test", choices=["test", "all"],
                   help="evaluate the recorded held-out split or all records")

    p = sub.add_parser("ablate", help="run the regressor/weight/strategy ablations")
    _add_common(p, "manifest", "out-dir", "config", "seed")

    p = sub.add_parser("correlate", help="artifact vs distortion correlation study")
    _add_common(p, "manifest")
    p.add_argument("--out-dir", default=None)

    p = sub.add_parser("plot", help="render a scatter CSV to a PNG")
    p.add_argument("--scatter", required=True, help="two-column CSV with header")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--title", default=None)
    return parser


def _cmd_synth(args):
    manifest = build_synthetic_manifest(args.out_dir, seed=args.seed,
                                        n_hr=args.n_hr, size=args.size,
                                        ref_kind=args.ref_kind)
    print(f"wrote {len(manifest)} samples under {args.out_dir}")
    return 0


def _train_config(args):
    overrides = {"seed": args.seed, "mode": args.mode,
                 "fixed_weight": getattr(args, "fixed_weight", None),
                 "precision": getattr(args, "precision", None)}
    return TrainConfig.from_json(args.config, overrides)


def _cmd_train(args):
    config = _train_config(args)
    manifest = load_manifest(args.manifest)
    spec = SplitSpec(seed=config.seed)
    train_m, val_m, test_m = split_dataset(manifest, spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, log_rows, info = train(train_m, val_m, config,
                                  on_epoch=lambda r: print(
                                      f"epoch {r['epoch']:3d}  train {r['train_l1']:.5f}"
                                      f"  val {r['val_l1']:.5f}  lr {r['lr']:.2e}"))
    write_log(log_rows, out_dir / "training_log.csv")
    meta = {
        "seed": config.seed,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "split": asdict(spec),
        "manifest": str(Path(args.manifest).resolve()),
        "normalization": {"mos_min": manifest.mos_range[0],
                          "mos_max": manifest.mos_range[1],
                          "mos_direction": manifest.mos_direction},
        **info,
    }
    save_checkpoint(model, out_dir, meta)
    print(f"best epoch {info['best_epoch']} (val L1 {info['best_val_l1']:.5f}); "
          f"checkpoint at {out_dir}")
    return 0


def save_checkpoint(model, ckpt_dir, meta):
    model.save(ckpt_dir, meta)
    weights = (Path(ckpt_dir) / "weights.bin").read_bytes()
    meta = dict(meta)
    meta["checkpoint_id"] = hashlib.sha256(weights).hexdigest()[:16]
    (Path(ckpt_dir) / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cmd_predict(args):
    model = SpqeModel.load(args.ckpt)
    sr = read_image(args.sr)
    ref = None
    ref_kind = "NONE"
    if args.ref is not None:
        ref = read_image(args.ref)
        ref_kind = args.ref_kind or "HR"
    sal_map = None
    if args.saliency is not None:
        sal_map = load_saliency_file(args.saliency, sr.shape[:2])
    bundle = model.predict_images(sr, ref, ref_kind, args.scale, sal_map=sal_map)
    print(json.dumps(bundle.to_dict()))
    return 0


def _cmd_eval(args):
    model = SpqeModel.load(args.ckpt)
    meta = SpqeModel.load_meta(args.ckpt)
    if len(args.manifests) == 1:
        manifest = load_manifest(args.manifests[0])
        report = eval_checkpoint(model, manifest, split=args.split,
                                 logistic_fit=args.logistic_fit,
                                 out_dir=args.out_dir, meta=meta)
    else:
        targets = {Path(m).stem + f"#{i}" if Path(m).stem == "manifest" else Path(m).stem:
                   load_manifest(m) for i, m in enumerate(args.manifests)}
        report = cross_dataset(model, targets, meta=meta,
                               logistic_fit=args.logistic_fit)
        if args.out_dir:
            report.save(args.out_dir, stem="cross_dataset")
    print(report.to_text(), end="")
    return 0


def _cmd_ablate(args):
    config = _train_config(args)
    manifest = load_manifest(args.manifest)
    train_m, val_m, test_m = split_dataset(manifest, SplitSpec(seed=config.seed))
    report = ablation_suite(train_m, val_m, test_m, config, out_dir=args.out_dir)
    print(report.to_text(), end="")
    return 0


def _cmd_correlate(args):
    manifest = load_manifest(args.manifest)
    report = correlation_study(manifest, out_dir=args.out_dir)
    print(report.to_text(), end="")
    return 0


def _cmd_plot(args):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(args.scatter)
    if not path.is_file():
        raise DataError(f"scatter file not found: {path}")
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    if len(header) != 2:
        raise DataError(f"{path}: expected a two-column scatter CSV")
    xs, ys = [], []
    for line in lines[1:]:
        a, b = line.split(",")
        xs.append(float(a))
        ys.append(float(b))
    fig, ax = plt.subplots(figsize=(4.2, 4.0), dpi=120)
    ax.scatter(xs, ys, s=12, alpha=0.7, edgecolors="none")
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    if args.title:
        ax.set_title(args.title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out)
    plt.close(fig)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "correlate": _cmd_correlate,
    "plot": _cmd_plot,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; --help exits 0
        return 1 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
