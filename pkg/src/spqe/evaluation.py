"""Benchmark reports, cross-dataset evaluation, ablation suites and the
artifact-vs-distortion correlation study."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .correlations import plcc, srcc
from .data import load_manifest, split_dataset, SplitSpec
from .errors import DataError, NumericError, SpqeError
from .images import read_image
from .metrics import FR_METRICS, blur_measure, jpeg_blockiness
from .model import SpqeModel
from .training import TrainConfig, train

_FLOAT_FMT = "{:.6f}"


def _fmt(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "nan"
    if isinstance(v, float):
        return _FLOAT_FMT.format(v)
    return str(v)


@dataclass(frozen=True)
class EvalRow:
    dataset_id: str
    method: str
    mode: str
    plcc: float
    srcc: float
    n_samples: int
    note: str = ""


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    COLUMNS = ("dataset_id", "method", "mode", "plcc", "srcc", "n_samples", "note")

    def to_csv(self):
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join([r.dataset_id, r.method, r.mode, _fmt(r.plcc),
                                   _fmt(r.srcc), str(r.n_samples), r.note]))
        return "\n".join(lines) + "\n"

    def to_text(self):
        cells = [list(self.COLUMNS)]
        for r in self.rows:
            cells.append([r.dataset_id, r.method, r.mode, _fmt(r.plcc),
                          _fmt(r.srcc), str(r.n_samples), r.note])
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.COLUMNS))]
        out = []
        for row in cells:
            out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if self.provenance:
            out.append("")
            out.append("# " + json.dumps(self.provenance, sort_keys=True))
        return "\n".join(out) + "\n"

    def save(self, out_dir, stem="report"):
        from pathlib import Path

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.csv").write_text(self.to_csv(), encoding="utf-8")
        (out_dir / f"{stem}.txt").write_text(self.to_text(), encoding="utf-8")
        (out_dir / f"{stem}.provenance.json").write_text(
            json.dumps(self.provenance, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")


def config_hash(config):
    blob = json.dumps(config.to_dict() if hasattr(config, "to_dict") else config,
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def model_predictor(model, manifest_dir=None):
    return lambda rec: model.predict_record(rec, manifest_dir)


def _write_scatter(path, header, pairs):
    lines = [header]
    for a, b in pairs:
        lines.append(f"{_fmt(float(a))},{_fmt(float(b))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_benchmark(predict_fn, manifest, method="spqe", mode="FULL",
                  logistic_fit=False, out_dir=None, provenance=None):
    """Predict every record and correlate against ground truth per dataset.

    Also emits scatter data (fused score vs gt, perception score vs fused
    score raw and weighted, and weight vs gt) when out_dir is given.
    """
    rows = []
    scatter = {"spqe_vs_gt": [], "sp_unweighted": [], "sp_weighted": [],
               "wp_vs_gt": []}
    for ds in manifest.dataset_ids():
        records = [r for r in manifest.records if r.dataset_id == ds]
        bundles = [predict_fn(r) for r in records]
        gts = np.array([r.gt for r in records])
        preds = np.array([b.s_spqe for b in bundles])
        for b, g in zip(bundles, gts):
            scatter["spqe_vs_gt"].append((b.s_spqe, g))
            scatter["sp_unweighted"].append((b.s_p, b.s_spqe))
            scatter["sp_weighted"].append((b.w_p * b.s_p, b.s_spqe))
            scatter["wp_vs_gt"].append((b.w_p, g))
        if len(records) < 3:
            rows.append(EvalRow(ds, method, mode, float("nan"), float("nan"),
                                len(records), "too few samples"))
            continue
        try:
            p = plcc(preds, gts, logistic_fit=logistic_fit)
            s = srcc(preds, gts)
            rows.append(EvalRow(ds, method, mode, p, s, len(records)))
        except NumericError:
            rows.append(EvalRow(ds, method, mode, float("nan"), float("nan"),
                                len(records), "zero-variance"))
    prov = dict(provenance or {})
    prov["logistic_fit"] = bool(logistic_fit)
    report = EvalReport(rows, prov)
    if out_dir is not None:
        from pathlib import Path

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.save(out_dir)
        headers = {"spqe_vs_gt": "s_spqe,gt", "sp_unweighted": "s_p,s_spqe",
                   "sp_weighted": "weighted_s_p,s_spqe", "wp_vs_gt": "w_p,gt"}
        for name, pairs in scatter.items():
            _write_scatter(out_dir / f"scatter_{name}.csv", headers[name], pairs)
    return report


def eval_checkpoint(model, manifest, split="test", logistic_fit=False,
                    out_dir=None, meta=None):
    """Evaluate a trained model the way it was trained: on the held-out test
    partition derived from its recorded split seed, or on all records."""
    meta = meta or {}
    if split == "test":
        spec_dict = meta.get("split")
        if not spec_dict:
            raise DataError("checkpoint has no recorded split; use split='all'")
        spec = SplitSpec(**spec_dict)
        _, _, part = split_dataset(manifest, spec)
    elif split == "all":
        part = manifest
    else:
        raise DataError(f"unknown split {split!r}")
    prov = {"checkpoint": meta.get("checkpoint_id", ""),
            "split_seed": (meta.get("split") or {}).get("seed"),
            "config_hash": meta.get("config_hash", ""), "split": split}
    return run_benchmark(model_predictor(model, manifest.source), part,
                         mode=model.mode, logistic_fit=logistic_fit,
                         out_dir=out_dir, provenance=prov)


def cross_dataset(model, targets, meta=None, logistic_fit=False):
    """Evaluate one trained model across other datasets (rank correlation).

    Targets lacking the model's reference kind produce a skipped row with a
    reason instead of failing the run.
    """
    rows = []
    for name, manifest in targets.items():
        if model.ref_kind == "NONE":
            usable = list(manifest.records)
        else:
            usable = [r for r in manifest.records if r.ref_kind == model.ref_kind]
        if len(usable) < 3:
            reason = (f"no {model.ref_kind} reference" if model.ref_kind != "NONE"
                      else "too few samples")
            rows.append(EvalRow(name, "spqe", model.mode, float("nan"),
                                float("nan"), len(usable), reason))
            continue
        sub = manifest.subset(usable)
        rep = run_benchmark(model_predictor(model, manifest.source), sub,
                            mode=model.mode, logistic_fit=logistic_fit)
        for r in rep.rows:
            rows.append(replace(r, dataset_id=name))
    prov = dict(meta or {})
    return EvalReport(rows, prov)


ABLATION_FIXED_WEIGHTS = (0.2, 0.4, 0.5, 0.6, 0.8)


def ablation_suite(train_m, val_m, test_m, base_config, out_dir=None):
    """Regressor / weight-setting / strategy ablations with shared seeds.

    13 rows: structure-only, perception-only and full; five fixed fusion
    weights plus the adaptive weight; and the four multi-scale x saliency
    combinations.  The full model is trained once and reused for its three
    aliases (identical seed and data give identical results).
    """
    cells = []
    cells.append(("table4", "structure_only", {"mode": "STRUCTURE_ONLY"}))
    cells.append(("table4", "perception_only", {"mode": "PERCEPTION_ONLY"}))
    cells.append(("table4", "full", None))
    for w in ABLATION_FIXED_WEIGHTS:
        cells.append(("table5", f"fixed_w{w:g}",
                      {"mode": "FIXED_WEIGHT", "fixed_weight": w}))
    cells.append(("table5", "adaptive", None))
    cells.append(("table6", "multi_scale_only", {"use_saliency": False}))
    cells.append(("table6", "saliency_only", {"multi_scale": False}))
    cells.append(("table6", "single_scale_no_saliency",
                  {"multi_scale": False, "use_saliency": False}))
    cells.append(("table6", "multi_scale_and_saliency", None))

    full_report = None
    rows = []
    for table, label, changes in cells:
        try:
            if changes is None:
                if full_report is None:
                    full_report = _train_eval_cell(train_m, val_m, test_m, base_config, {})
                cell_rows = full_report
            else:
                cell_rows = _train_eval_cell(train_m, val_m, test_m, base_config, changes)
            for r in cell_rows:
                rows.append(replace(r, method=label, mode=table))
        except SpqeError as exc:
            rows.append(EvalRow(test_m.dataset_ids()[0] if len(test_m) else "-",
                                label, table, float("nan"), float("nan"), 0,
                                f"failed: {exc}"))
    prov = {"seed": base_config.seed, "config_hash": config_hash(base_config)}
    report = EvalReport(rows, prov)
    if out_dir is not None:
        report.save(out_dir, stem="ablation")
    return report


def _train_eval_cell(train_m, val_m, test_m, base_config, changes):
    cfg_kwargs = base_config.to_dict()
    cfg_kwargs.update(changes)
    cfg = TrainConfig(**cfg_kwargs)
    model, _, _ = train(train_m, val_m, cfg)
    rep = run_benchmark(model_predictor(model, test_m.source), test_m,
                        mode=cfg.mode)
    return rep.rows


# ---------------------------------------------------------------------------
# artifact-vs-distortion correlation study
# ---------------------------------------------------------------------------

_FAMILY_MEASURES = {"jpeg": ("jpeg_blockiness", jpeg_blockiness),
                    "blur": ("blur_measure", blur_measure)}


def normalize_family(tag):
    """Map an sr_method tag onto an artifact family ('jpeg' or 'blur')."""
    t = tag.lower()
    if "jpeg" in t or "block" in t:
        return "jpeg"
    if "blur" in t:
        return "blur"
    return None


@dataclass
class CorrelationStudyReport:
    rows: list[dict] = field(default_factory=list)
    fr_names: tuple = ()

    def columns(self):
        return ("dataset_id", "family", "measure", "n", "srcc_gt",
                *[f"srcc_{m}" for m in self.fr_names])

    def to_csv(self):
        cols = self.columns()
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(_fmt(r.get(c)) for c in cols))
        return "\n".join(lines) + "\n"

    def to_text(self):
        cols = self.columns()
        cells = [list(cols)] + [[_fmt(r.get(c)) for c in cols] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                         for row in cells) + "\n"

    def save(self, out_dir, stem="correlation_study"):
        from pathlib import Path

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.csv").write_text(self.to_csv(), encoding="utf-8")
        (out_dir / f"{stem}.txt").write_text(self.to_text(), encoding="utf-8")


def correlation_study(manifest, fr_names=("psnr", "ssim", "ms_ssim", "gmsd"),
                      out_dir=None):
    """Per artifact family: rank correlation of the task-specific artifact
    measure against ground truth and against each FR metric.

    Correlation magnitudes are reported (the orientation of each metric is
    recorded separately in FR_METRICS).  Families with fewer than 3 usable
    records are skipped; FR metrics that reject an image size (MS-SSIM on
    small images) are reported as nan.
    """
    groups = {}
    for rec in manifest.records:
        fam = normalize_family(rec.sr_method)
        if fam is None:
            continue
        groups.setdefault((rec.dataset_id, fam), []).append(rec)

    rows = []
    for (ds, fam), records in sorted(groups.items()):
        if len(records) < 3:
            continue
        usable = [r for r in records if r.ref_path is not None]
        if len(usable) < 3:
            continue
        measure_name, measure = _FAMILY_MEASURES[fam]
        nr_vals = []
        fr_vals = {m: [] for m in fr_names}
        gts = []
        for rec in usable:
            sr = read_image(rec.sr_path)
            ref = read_image(rec.ref_path)
            nr_vals.append(measure(sr))
            gts.append(rec.gt)
            for m in fr_names:
                fn = FR_METRICS[m][0]
                try:
                    fr_vals[m].append(fn(ref, sr))
                except DataError:
                    fr_vals[m].append(np.nan)
        row = {"dataset_id": ds, "family": fam, "measure": measure_name,
               "n": len(usable)}
        row["srcc_gt"] = _abs_srcc(nr_vals, gts)
        for m in fr_names:
            row[f"srcc_{m}"] = _abs_srcc(nr_vals, fr_vals[m])
        rows.append(row)
    report = CorrelationStudyReport(rows, tuple(fr_names))
    if out_dir is not None:
        report.save(out_dir)
    return report


def _abs_srcc(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < 3:
        return float("nan")
    try:
        return abs(srcc(a[ok], b[ok]))
    except NumericError:
        return float("nan")
