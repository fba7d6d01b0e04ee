"""Writer for the `SEA1` named-tensor container.

This is a clean-room implementation against the file-format contract (the
exporter deliberately does not import the training package): magic "SEA1",
u32 version, u32 entry count; per entry u32 name length + UTF-8 name, u32
dtype code (0 = float32, 1 = float64), u32 rank, u64 dims, row-major
little-endian payload.  Entries are name-sorted and the write is atomic.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SEA1"
VERSION = 1
_CODES = {4: 0, 8: 1}


def write_tensors(path, tensors: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<II", VERSION, len(tensors)))
            for name in sorted(tensors):
                arr = np.asarray(tensors[name])
                if arr.dtype.kind != "f" or arr.dtype.itemsize not in _CODES:
                    raise ValueError(f"{name}: only float32/float64 tensors are writable")
                arr = np.asarray(arr, dtype=f"<f{arr.dtype.itemsize}")
                encoded = name.encode("utf-8")
                f.write(struct.pack("<I", len(encoded)))
                f.write(encoded)
                f.write(struct.pack("<II", _CODES[arr.dtype.itemsize], arr.ndim))
                for dim in arr.shape:
                    f.write(struct.pack("<Q", dim))
                f.write(arr.tobytes(order="C"))
        os.replace(tmp, path)
    except Exception:
        tmp.unlink(missing_ok=True)
        raise


def read_tensors(path) -> dict:
    """Minimal reader used for self-verification after a write."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 12
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        code, rank = struct.unpack_from("<II", raw, offset)
        offset += 8
        dims = struct.unpack_from(f"<{rank}Q", raw, offset)
        offset += 8 * rank
        dtype = np.dtype("<f4") if code == 0 else np.dtype("<f8")
        n_bytes = int(np.prod(dims)) * dtype.itemsize if dims else dtype.itemsize
        out[name] = np.frombuffer(raw[offset : offset + n_bytes], dtype=dtype).reshape(dims)
        offset += n_bytes
    return out
