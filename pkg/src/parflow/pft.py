"""PFT1 tensor container.

Layout: magic ``b"PFT1"``, uint8 scalar code, uint8 ndim, ``ndim`` little-endian
uint64 dims, then the little-endian row-major payload.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"PFT1"
SCALAR_CODES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_CODE_OF = {np.dtype("float64"): 0, np.dtype("float32"): 1}


class PFTError(ValueError):
    """Malformed or unsupported PFT1 data."""


def dumps(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _CODE_OF:
        arr = arr.astype(np.float64)
    code = _CODE_OF[arr.dtype]
    if arr.ndim > 255:
        raise PFTError("too many dimensions")
    header = MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=SCALAR_CODES[code]).tobytes()
    return header + payload


def loads(data: bytes) -> np.ndarray:
    if len(data) < 6 or data[:4] != MAGIC:
        raise PFTError("bad magic: not a PFT1 stream")
    code, ndim = struct.unpack_from("<BB", data, 4)
    if code not in SCALAR_CODES:
        raise PFTError(f"unknown scalar code {code}")
    offset = 6 + 8 * ndim
    if len(data) < offset:
        raise PFTError("truncated header")
    dims = struct.unpack_from(f"<{ndim}Q", data, 6)
    dtype = SCALAR_CODES[code]
    count = int(np.prod(dims, dtype=np.uint64)) if ndim else 1
    if len(data) - offset != count * dtype.itemsize:
        raise PFTError(
            f"payload has {len(data) - offset} bytes, dims {dims} need {count * dtype.itemsize}"
        )
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def read(path: str | os.PathLike) -> np.ndarray:
    return loads(Path(path).read_bytes())


def write(path: str | os.PathLike, arr: np.ndarray) -> None:
    """Write atomically so a failed run never leaves a partial file."""
    path = Path(path)
    data = dumps(arr)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=".pft-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
