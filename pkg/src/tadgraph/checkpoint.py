"""Flat binary archive for model parameters.

Layout: magic ``TGCK``, u32 version, u32 entry count, then per entry a
u16 name length, the utf-8 name, a u8 rank, u32 dimensions, and the
row-major float64 little-endian payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"TGCK"
VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, value in params.items():
            arr = np.ascontiguousarray(value, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a parameter checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    params: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, offset)
            offset += 4 * ndim
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if ndim else 8
            payload = raw[offset:offset + nbytes]
            if len(payload) != nbytes:
                raise FormatError(f"{path}: truncated payload for parameter '{name}'")
            params[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
            offset += nbytes
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint header") from exc
    return params
