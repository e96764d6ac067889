"""Minimal binary container for dense float arrays.

Layout (little-endian)::

    b"MNN1" | dtype code u8 (0 = float32, 1 = float64) | rank u8 | rank x u64 dims | C-order payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

MAGIC = b"MNN1"
_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_BY_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def encode(a: np.ndarray) -> bytes:
    a = np.asarray(a)
    code = _BY_DTYPE.get(a.dtype.newbyteorder("=")) if a.dtype.kind == "f" else None
    if code is None:
        raise ConfigError(f"only float32/float64 arrays can be stored, got {a.dtype}")
    if a.ndim > 255:
        raise ConfigError("rank too large")
    head = MAGIC + struct.pack("<BB", code, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + np.ascontiguousarray(a, dtype=_CODES[code]).tobytes()


def decode(buf: bytes) -> np.ndarray:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise ConfigError("not an MNN1 array file")
    code, rank = struct.unpack_from("<BB", buf, 4)
    if code not in _CODES:
        raise ConfigError(f"unknown dtype code {code}")
    off = 6 + 8 * rank
    if len(buf) < off:
        raise ConfigError("truncated array header")
    dims = struct.unpack_from(f"<{rank}Q", buf, 6)
    dt = _CODES[code]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(buf) - off != count * dt.itemsize:
        raise ConfigError(f"payload is {len(buf) - off} bytes, expected {count * dt.itemsize}")
    return np.frombuffer(buf, dtype=dt, offset=off, count=count).reshape(dims).astype(dt.newbyteorder("="))


def write_array(path, a: np.ndarray) -> None:
    Path(path).write_bytes(encode(a))


def read_array(path) -> np.ndarray:
    return decode(Path(path).read_bytes())
