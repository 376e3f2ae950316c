"""DGFT v1 tensor files.

Layout: magic bytes ``DGFT``, u32 version (=1), u32 rank, rank x u64
dims, then the row-major float64 little-endian payload.  Every tensor
that crosses a process or disk boundary in this package goes through
this format.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DGFT"
VERSION = 1


class DgftError(ValueError):
    """Malformed DGFT file."""


def dumps(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim:  # ascontiguousarray would promote rank 0 to rank 1
        arr = np.ascontiguousarray(arr)
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = arr.astype("<f8").tobytes(order="C")
    return header + payload


def loads(data: bytes) -> np.ndarray:
    if data[:4] != MAGIC:
        raise DgftError("bad magic, not a DGFT file")
    version, rank = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise DgftError(f"unsupported DGFT version {version}")
    dims = struct.unpack_from(f"<{rank}Q", data, 12)
    offset = 12 + 8 * rank
    n = 1
    for d in dims:
        n *= d
    expected = offset + 8 * n
    if len(data) != expected:
        raise DgftError(f"payload size mismatch: {len(data)} != {expected}")
    arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset)
    return arr.reshape(dims).astype(np.float64)


def write(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(dumps(arr))


def read(path) -> np.ndarray:
    return loads(Path(path).read_bytes())
