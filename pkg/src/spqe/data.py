"""Dataset manifests, opinion-score normalization and deterministic splits.

A dataset is a CSV manifest plus a JSON sidecar describing the raw score
scale.  CSV schema (header required, UTF-8):

    sample_id,dataset_id,sr_path,ref_path,ref_kind,scale_factor,mos_raw,sr_method

Sidecar ``<manifest>.json``: {"mos_min": .., "mos_max": .., "mos_direction":
"higher"|"lower"}.  Raw scores are normalized to [0, 1] at load time with
"higher is better" orientation everywhere downstream.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

REF_KINDS = ("HR", "LR", "NONE")
HIGHER_BETTER = "higher"
LOWER_BETTER = "lower"

_COLUMNS = ["sample_id", "dataset_id", "sr_path", "ref_path", "ref_kind",
            "scale_factor", "mos_raw", "sr_method"]


@dataclass(frozen=True)
class SampleRecord:
    """One SR image with its reference and normalized opinion score."""

    sample_id: str
    dataset_id: str
    sr_path: Path
    ref_path: Path | None
    ref_kind: str
    scale_factor: int
    mos_raw: float
    gt: float
    sr_method: str = ""

    def __post_init__(self):
        if self.ref_kind not in REF_KINDS:
            raise DataError(f"{self.sample_id}: ref_kind must be one of {REF_KINDS}")
        if self.ref_kind != "NONE" and self.ref_path is None:
            raise DataError(f"{self.sample_id}: ref_kind {self.ref_kind} requires ref_path")
        if self.scale_factor < 1:
            raise DataError(f"{self.sample_id}: scale_factor must be positive")
        if self.ref_kind == "LR" and self.scale_factor < 2:
            raise DataError(f"{self.sample_id}: LR reference requires scale_factor >= 2")
        if not 0.0 <= self.gt <= 1.0:
            raise DataError(f"{self.sample_id}: gt {self.gt} outside [0, 1]")


@dataclass(frozen=True)
class DatasetManifest:
    records: list[SampleRecord]
    mos_range: tuple[float, float]
    mos_direction: str
    source: Path | None = None  # directory holding the CSV (for sidecars)

    def __post_init__(self):
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate sample_id in manifest")

    def __len__(self):
        return len(self.records)

    def dataset_ids(self):
        seen = []
        for r in self.records:
            if r.dataset_id not in seen:
                seen.append(r.dataset_id)
        return seen

    def subset(self, records):
        return DatasetManifest(list(records), self.mos_range, self.mos_direction,
                               self.source)


@dataclass(frozen=True)
class ScoreBundle:
    """Predicted scores for one sample; s_s is absent without a reference."""

    s_p: float
    w_p: float
    s_spqe: float
    s_s: float | None = None

    def __post_init__(self):
        for name in ("s_p", "w_p", "s_spqe"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise DataError(f"{name} is not finite: {v}")
        if not 0.0 <= self.w_p <= 1.0:
            raise DataError(f"w_p {self.w_p} outside [0, 1]")
        if self.s_s is not None:
            lo = min(self.s_p, self.s_s) - 1e-9
            hi = max(self.s_p, self.s_s) + 1e-9
            if not lo <= self.s_spqe <= hi:
                raise DataError(
                    f"fused score {self.s_spqe} outside [{lo}, {hi}]")

    def to_dict(self):
        return {"s_s": self.s_s, "s_p": self.s_p, "w_p": self.w_p,
                "s_spqe": self.s_spqe}


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train_frac: float = 0.8
    val_frac_of_train: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0 or not 0.0 < self.val_frac_of_train < 1.0:
            raise DataError("split fractions must lie in (0, 1)")


def normalize_mos(mos_raw, mos_range, direction):
    """Affine map of a raw opinion score to [0, 1], higher = better."""
    lo, hi = mos_range
    if not hi > lo:
        raise DataError(f"degenerate mos_range ({lo}, {hi})")
    x = (float(mos_raw) - lo) / (hi - lo)
    if direction == LOWER_BETTER:
        x = 1.0 - x
    elif direction != HIGHER_BETTER:
        raise DataError(f"unknown mos_direction {direction!r}")
    return x


def load_manifest(path):
    """Read a manifest CSV and its JSON sidecar into a DatasetManifest."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.is_file():
        raise DataError(f"manifest sidecar not found: {sidecar}")
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        mos_range = (float(meta["mos_min"]), float(meta["mos_max"]))
        direction = str(meta["mos_direction"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{sidecar}: bad sidecar: {exc}") from exc

    base = path.parent
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in _COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing manifest columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                mos_raw = float(row["mos_raw"])
                scale = int(row["scale_factor"])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad numeric field: {exc}") from exc
            if not mos_range[0] <= mos_raw <= mos_range[1]:
                raise DataError(
                    f"{path}:{lineno}: mos_raw {mos_raw} outside declared range {mos_range}")
            ref_raw = row["ref_path"].strip()
            records.append(SampleRecord(
                sample_id=row["sample_id"],
                dataset_id=row["dataset_id"],
                sr_path=(base / row["sr_path"]).resolve(),
                ref_path=(base / ref_raw).resolve() if ref_raw else None,
                ref_kind=row["ref_kind"].strip().upper(),
                scale_factor=scale,
                mos_raw=mos_raw,
                gt=normalize_mos(mos_raw, mos_range, direction),
                sr_method=row["sr_method"],
            ))
    return DatasetManifest(records, mos_range, direction, source=base.resolve())


def save_manifest(manifest, path):
    """Write a manifest CSV + sidecar; paths are stored relative to the CSV."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        if p is None:
            return ""
        try:
            return str(Path(p).resolve().relative_to(base))
        except ValueError:
            return str(Path(p).resolve())

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for r in manifest.records:
            writer.writerow([r.sample_id, r.dataset_id, rel(r.sr_path), rel(r.ref_path),
                             r.ref_kind, r.scale_factor, repr(r.mos_raw), r.sr_method])
    sidecar = {"mos_min": manifest.mos_range[0], "mos_max": manifest.mos_range[1],
               "mos_direction": manifest.mos_direction}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def split_dataset(manifest, spec):
    """Deterministic (train, val, test) partition of a manifest.

    Records are ordered by sample_id before shuffling, so membership depends
    only on ids and the seed, not on CSV row order.  Sizes follow
    floor(n * train_frac) for the train pool and floor(pool *
    val_frac_of_train) for validation.
    """
    records = sorted(manifest.records, key=lambda r: r.sample_id)
    n = len(records)
    if n < 3:
        raise DataError(f"need at least 3 records to split, got {n}")
    n_pool = int(np.floor(n * spec.train_frac))
    n_val = int(np.floor(n_pool * spec.val_frac_of_train))
    n_train = n_pool - n_val
    n_test = n - n_pool
    if min(n_train, n_val, n_test) < 1:
        raise DataError(
            f"split of {n} records gives empty partition "
            f"(train {n_train}, val {n_val}, test {n_test})")
    perm = np.random.default_rng(spec.seed).permutation(n)
    shuffled = [records[i] for i in perm]
    train = manifest.subset(shuffled[:n_train])
    val = manifest.subset(shuffled[n_train:n_pool])
    test = manifest.subset(shuffled[n_pool:])
    return train, val, test
