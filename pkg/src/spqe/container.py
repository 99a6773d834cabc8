"""Single-file named-array container used for weights.

Layout (all little-endian):

    bytes 0..7    magic ``SPQEARR1``
    bytes 8..15   uint64 ``n``: byte length of the JSON index
    bytes 16..16+n  UTF-8 JSON: {"arrays": {name: {"shape": [...], "offset": int}}}
    rest          raw float32 payloads, concatenated at the given offsets
                  (offsets are relative to the end of the index)

Arrays are always stored as float32 so files are portable; loading returns
float32 and callers cast if they need wider precision.  Index entries are
written in insertion order and offsets are contiguous.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"SPQEARR1"


def save_arrays(path, arrays):
    """Write an ordered mapping of name -> ndarray as float32."""
    index = {}
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        index[name] = {"shape": list(a.shape), "offset": offset}
        payloads.append(a.tobytes())
        offset += a.nbytes
    blob = json.dumps({"arrays": index}, sort_keys=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint64(len(blob)).astype("<u8").tobytes())
        fh.write(blob)
        for p in payloads:
            fh.write(p)


def load_arrays(path):
    """Read a container back into a dict of float32 arrays (file order)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"array container not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: not a named-array container (bad magic)")
    n = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    try:
        index = json.loads(raw[16:16 + n].decode("utf-8"))["arrays"]
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: corrupt container index: {exc}") from exc
    data_start = 16 + n
    out = {}
    for name, entry in index.items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = data_start + entry["offset"]
        end = start + 4 * count
        if end > len(raw):
            raise DataError(f"{path}: truncated payload for array {name!r}")
        arr = np.frombuffer(raw[start:end], dtype="<f4").reshape(shape)
        out[name] = arr.astype(np.float32, copy=True)
    return out
