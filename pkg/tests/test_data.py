"""Manifest loading, score normalization, splits, and ScoreBundle contracts."""

import numpy as np
import pytest

from spqe.data import (DatasetManifest, SampleRecord, ScoreBundle, SplitSpec,
                       load_manifest, normalize_mos, save_manifest, split_dataset)
from spqe.errors import DataError

HEADER = "sample_id,dataset_id,sr_path,ref_path,ref_kind,scale_factor,mos_raw,sr_method"


def write_manifest(tmp_path, rows, mos_min=1, mos_max=5, direction="higher",
                   name="m.csv"):
    path = tmp_path / name
    path.write_text("\n".join([HEADER] + rows) + "\n", encoding="utf-8")
    path.with_suffix(".csv.json").write_text(
        f'{{"mos_min": {mos_min}, "mos_max": {mos_max}, "mos_direction": "{direction}"}}',
        encoding="utf-8")
    return path


class TestNormalizeMos:
    def test_midpoint(self):
        assert normalize_mos(3.0, (1, 5), "higher") == pytest.approx(0.5)

    def test_identity_on_unit_range(self):
        for x in (0.0, 0.25, 0.9, 1.0):
            assert normalize_mos(x, (0, 1), "higher") == pytest.approx(x)

    def test_lower_better_inversion(self):
        assert normalize_mos(80, (0, 100), "lower") == pytest.approx(0.2)
        assert normalize_mos(25, (0, 100), "lower") == pytest.approx(0.75)

    def test_degenerate_range(self):
        with pytest.raises(DataError, match="degenerate"):
            normalize_mos(1.0, (2, 2), "higher")

    def test_monotonicity(self):
        xs = np.linspace(1, 5, 17)
        hi = [normalize_mos(x, (1, 5), "higher") for x in xs]
        lo = [normalize_mos(x, (1, 5), "lower") for x in xs]
        assert all(a < b for a, b in zip(hi, hi[1:]))
        assert all(a > b for a, b in zip(lo, lo[1:]))


class TestLoadManifest:
    def test_range_endpoints(self, tmp_path):
        path = write_manifest(tmp_path, [
            "a,ds,a_sr.png,a_hr.png,HR,2,5,biciubic",
            "b,ds,b_sr.png,b_hr.png,HR,2,1,gan",
            "c,ds,c_sr.png,c_hr.png,HR,2,3,cnn",
        ])
        m = load_manifest(path)
        gts = {r.sample_id: r.gt for r in m.records}
        assert gts["a"] == pytest.approx(1.0)
        assert gts["b"] == pytest.approx(0.0)
        assert gts["c"] == pytest.approx(0.5)

    def test_dmos_inverted_at_ingestion(self, tmp_path):
        path = write_manifest(tmp_path, ["a,ds,s.png,r.png,HR,2,25,m",
                                         "b,ds,s2.png,r.png,HR,2,75,m"],
                              mos_min=0, mos_max=100, direction="lower")
        m = load_manifest(path)
        assert m.records[0].gt == pytest.approx(0.75)
        assert m.records[1].gt == pytest.approx(0.25)

    def test_paths_resolved_relative_to_manifest(self, tmp_path):
        path = write_manifest(tmp_path, ["a,ds,img/s.png,img/r.png,HR,2,3,m"])
        m = load_manifest(path)
        assert m.records[0].sr_path == (tmp_path / "img" / "s.png").resolve()

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sample_id,dataset_id\na,b\n", encoding="utf-8")
        path.with_suffix(".csv.json").write_text(
            '{"mos_min": 1, "mos_max": 5, "mos_direction": "higher"}')
        with pytest.raises(DataError, match="missing manifest columns"):
            load_manifest(path)

    def test_mos_outside_range(self, tmp_path):
        path = write_manifest(tmp_path, ["a,ds,s.png,r.png,HR,2,9,m"])
        with pytest.raises(DataError, match="outside declared range"):
            load_manifest(path)

    def test_missing_sidecar(self, tmp_path):
        path = tmp_path / "solo.csv"
        path.write_text(HEADER + "\n", encoding="utf-8")
        with pytest.raises(DataError, match="sidecar"):
            load_manifest(path)

    def test_duplicate_ids(self, tmp_path):
        path = write_manifest(tmp_path, ["a,ds,s.png,r.png,HR,2,3,m",
                                         "a,ds,t.png,r.png,HR,2,4,m"])
        with pytest.raises(DataError, match="duplicate"):
            load_manifest(path)

    def test_round_trip_field_identical(self, tmp_path):
        path = write_manifest(tmp_path, [
            "a,ds,img/s.png,img/r.png,HR,2,3.25,bicubic",
            "b,ds,img/s2.png,,NONE,2,4.5,gan",
            "c,ds,img/s3.png,img/l.png,LR,4,1.75,cnn",
        ])
        m1 = load_manifest(path)
        out = tmp_path / "copy.csv"
        save_manifest(m1, out)
        m2 = load_manifest(out)
        assert m1.mos_range == m2.mos_range
        assert m1.mos_direction == m2.mos_direction
        for r1, r2 in zip(m1.records, m2.records):
            for field in ("sample_id", "dataset_id", "sr_path", "ref_path",
                          "ref_kind", "scale_factor", "mos_raw", "gt", "sr_method"):
                assert getattr(r1, field) == getattr(r2, field), field


def make_manifest(n, seed=0):
    rng = np.random.default_rng(seed)
    records = [SampleRecord(f"s{i:04d}", "ds", f"/img/{i}.png", f"/img/r{i}.png",
                            "HR", 2, float(rng.random()), float(rng.random()), "m")
               for i in range(n)]
    return DatasetManifest(records, (0.0, 1.0), "higher")


class TestSplitDataset:
    def test_default_sizes_100(self):
        tr, va, te = split_dataset(make_manifest(100), SplitSpec(seed=0))
        assert (len(tr), len(va), len(te)) == (72, 8, 20)

    def test_same_seed_identical(self):
        m = make_manifest(100)
        a = split_dataset(m, SplitSpec(seed=5))
        b = split_dataset(m, SplitSpec(seed=5))
        for pa, pb in zip(a, b):
            assert [r.sample_id for r in pa.records] == [r.sample_id for r in pb.records]

    def test_seeds_change_membership(self):
        m = make_manifest(100)
        base = set(r.sample_id for r in split_dataset(m, SplitSpec(seed=0))[2].records)
        differing = 0
        for seed in range(1, 21):
            test_ids = set(r.sample_id for r in split_dataset(m, SplitSpec(seed=seed))[2].records)
            if test_ids != base:
                differing += 1
        assert differing >= 19  # collision over 20 seeds is astronomically unlikely

    def test_partition_property_sweep(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            n = int(rng.integers(20, 200))
            m = make_manifest(n, seed=int(rng.integers(0, 1000)))
            tr, va, te = split_dataset(m, SplitSpec(seed=int(rng.integers(0, 1000))))
            ids = [r.sample_id for p in (tr, va, te) for r in p.records]
            assert len(ids) == n
            assert len(set(ids)) == n

    def test_row_order_does_not_change_membership(self):
        m = make_manifest(50)
        shuffled = DatasetManifest(list(reversed(m.records)), m.mos_range,
                                   m.mos_direction)
        a = split_dataset(m, SplitSpec(seed=3))
        b = split_dataset(shuffled, SplitSpec(seed=3))
        for pa, pb in zip(a, b):
            assert [r.sample_id for r in pa.records] == [r.sample_id for r in pb.records]

    def test_empty_partition_rejected(self):
        with pytest.raises(DataError):
            split_dataset(make_manifest(5), SplitSpec(seed=0))

    def test_too_few_records(self):
        with pytest.raises(DataError, match="at least 3"):
            split_dataset(make_manifest(2), SplitSpec(seed=0))


class TestRecordValidation:
    def test_lr_needs_scale_2(self):
        with pytest.raises(DataError, match="scale_factor"):
            SampleRecord("a", "d", "/s.png", "/l.png", "LR", 1, 0.5, 0.5, "m")

    def test_ref_kind_values(self):
        with pytest.raises(DataError, match="ref_kind"):
            SampleRecord("a", "d", "/s.png", "/r.png", "XX", 2, 0.5, 0.5, "m")

    def test_referenced_needs_path(self):
        with pytest.raises(DataError, match="requires ref_path"):
            SampleRecord("a", "d", "/s.png", None, "HR", 2, 0.5, 0.5, "m")

    def test_gt_bounds(self):
        with pytest.raises(DataError, match="outside"):
            SampleRecord("a", "d", "/s.png", "/r.png", "HR", 2, 0.5, 1.5, "m")


class TestScoreBundle:
    def test_fused_within_envelope(self):
        ScoreBundle(s_p=0.9, w_p=0.25, s_spqe=0.45, s_s=0.3)

    def test_fused_outside_envelope_rejected(self):
        with pytest.raises(DataError, match="fused score"):
            ScoreBundle(s_p=0.9, w_p=0.5, s_spqe=0.95, s_s=0.3)

    def test_weight_bounds(self):
        with pytest.raises(DataError, match="w_p"):
            ScoreBundle(s_p=0.5, w_p=1.2, s_spqe=0.5, s_s=0.5)

    def test_reference_free_bundle(self):
        b = ScoreBundle(s_p=0.7, w_p=0.6, s_spqe=0.7)
        assert b.to_dict()["s_s"] is None
