"""Named-array container round trips and corruption handling."""

import numpy as np
import pytest

from spqe.container import load_arrays, save_arrays
from spqe.errors import DataError


def test_round_trip_preserves_values_and_order(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "backbone.stage1.conv1.w": rng.standard_normal((8, 3, 3, 3)).astype(np.float32),
        "backbone.stage1.conv1.b": np.zeros(8, dtype=np.float32),
        "structure.scale_logits": rng.standard_normal(5).astype(np.float32),
    }
    path = tmp_path / "weights.bin"
    save_arrays(path, arrays)
    loaded = load_arrays(path)
    assert list(loaded) == list(arrays)
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])
        assert loaded[name].dtype == np.float32


def test_float64_inputs_are_stored_as_float32(tmp_path):
    path = tmp_path / "w.bin"
    save_arrays(path, {"a": np.array([1.0, 2.0], dtype=np.float64)})
    out = load_arrays(path)["a"]
    assert out.dtype == np.float32


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(DataError, match="magic"):
        load_arrays(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "w.bin"
    save_arrays(path, {"a": np.ones((4, 4), dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(DataError, match="truncated"):
        load_arrays(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_arrays(tmp_path / "absent.bin")
