"""Binary checkpoint container for named parameter sets.

Layout (all little-endian):
  magic "SVLA" | u32 version=1 | u64 entry count | entries...
  entry: u16 name length | UTF-8 name | u8 dtype code | u8 rank
         | u64 extents[rank] | raw row-major data
Dtype codes: 0 = float32, 1 = float64. Entries are written sorted by name
so byte output is a pure function of the parameter set.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SVLA"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def save_params(path, params: dict) -> None:
    """Write name->array mapping; bit-exact round trip with load_params."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<IQ", VERSION, len(params))]
    for name in sorted(params):
        arr = params[name]
        if hasattr(arr, "data") and not isinstance(arr, (np.ndarray, np.generic)):
            arr = arr.data  # Tensor
        arr = np.asarray(arr)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)  # keeps 0-d arrays 0-d
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype(_DTYPES[code], copy=False).tobytes())
    path.write_bytes(b"".join(chunks))


def load_params(path) -> dict:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    version, count = struct.unpack_from("<IQ", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 16
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + nlen].decode("utf-8")
        off += nlen
        code, rank = struct.unpack_from("<BB", buf, off)
        off += 2
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        shape = struct.unpack_from(f"<{rank}Q", buf, off)
        off += 8 * rank
        dt = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        nbytes = n * dt.itemsize
        arr = np.frombuffer(buf, dtype=dt, count=n, offset=off).reshape(shape)
        off += nbytes
        params[name] = arr.copy()
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return params


def save_meta(path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_meta(path) -> dict:
    return json.loads(Path(path).read_text())
