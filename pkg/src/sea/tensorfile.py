"""Bit-exact named-tensor container.

Layout (all little-endian): magic "SEA1", u32 format version, u32 entry
count, then per entry: u32 name length, UTF-8 name, u32 dtype code
(0 = float32, 1 = float64), u32 rank, u64 dims, raw row-major payload.
Entries are written in sorted name order so equal tensor sets produce equal
files; writes go through a temp file and rename so readers never observe a
partial file.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CheckpointWriteFailureError,
    TruncatedPayloadError,
    VersionUnsupportedError,
)

MAGIC = b"SEA1"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_tensors(path, tensors: dict) -> None:
    """Write named float tensors; load(save(x)) is bitwise x."""
    path = Path(path)
    names = sorted(tensors)
    if len(names) != len(tensors):
        raise ValueError("tensor names must be unique")
    tmp = path.with_name(path.name + ".tmp")
    try:
        _write_file(tmp, names, tensors)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise CheckpointWriteFailureError(f"cannot write {path}: {exc}") from exc
    except Exception:
        tmp.unlink(missing_ok=True)
        raise


def _write_file(tmp, names, tensors) -> None:
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(names)))
        for name in names:
            arr = np.asarray(tensors[name])
            if arr.dtype.kind != "f" or arr.dtype.itemsize not in (4, 8):
                raise ValueError(f"{name}: only float32/float64 tensors are storable")
            # fix the wire byte order regardless of host endianness; asarray
            # (not ascontiguousarray) keeps rank-0 tensors rank 0
            arr = np.asarray(arr, dtype=f"<f{arr.dtype.itemsize}")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", _DTYPE_CODES[arr.dtype], arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(arr.tobytes(order="C"))


def load_tensors(path) -> dict:
    """Read a tensor file back into {name: ndarray}, validating the header."""
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if len(raw) < 12:
        raise TruncatedPayloadError(f"{path}: file shorter than header")
    if bytes(view[:4]) != MAGIC:
        raise BadMagicError(f"{path}: bad magic {bytes(view[:4])!r}")
    version, count = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise VersionUnsupportedError(f"{path}: version {version} not supported")
    offset = 12
    tensors = {}

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(raw):
            raise TruncatedPayloadError(f"{path}: payload truncated at byte {offset}")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        code, rank = struct.unpack("<II", take(8))
        if code not in _CODE_DTYPES:
            raise VersionUnsupportedError(f"{path}: unknown dtype code {code}")
        dims = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        dtype = _CODE_DTYPES[code]
        n_items = int(np.prod(dims)) if dims else 1
        payload = take(n_items * dtype.itemsize)
        if name in tensors:
            raise BadMagicError(f"{path}: duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    if offset != len(raw):
        raise TruncatedPayloadError(f"{path}: {len(raw) - offset} trailing bytes")
    return tensors
