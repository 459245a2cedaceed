"""Flat binary checkpoint format.

Layout, all integers little-endian:

    8 bytes   magic  b"GFCHKPT\\0"
    u32       format version (1)
    u32 + bytes   config fingerprint, utf-8
    u32       tensor count
    per tensor:
        u16 + bytes   name, utf-8
        u8            ndim
        u32 * ndim    dimension sizes
        f64 * size    values, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractError

MAGIC = b"GFCHKPT\0"
VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], fingerprint: str) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    fp = fingerprint.encode("utf-8")
    chunks.append(struct.pack("<I", len(fp)))
    chunks.append(fp)
    chunks.append(struct.pack("<I", len(arrays)))
    for name, values in arrays.items():
        values = np.ascontiguousarray(values, dtype=np.float64)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        for dim in values.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(values.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    data = Path(path).read_bytes()
    view = memoryview(data)
    if bytes(view[:8]) != MAGIC:
        raise ContractError(f"{path}: not a checkpoint file (bad magic)")
    offset = 8
    (version,) = struct.unpack_from("<I", view, offset)
    offset += 4
    if version != VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {version}")
    (fp_len,) = struct.unpack_from("<I", view, offset)
    offset += 4
    fingerprint = bytes(view[offset:offset + fp_len]).decode("utf-8")
    offset += fp_len
    (count,) = struct.unpack_from("<I", view, offset)
    offset += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, offset)
        offset += 2
        name = bytes(view[offset:offset + name_len]).decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", view, offset)
        offset += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<I", view, offset)
            offset += 4
            shape.append(dim)
        size = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(view, dtype="<f8", count=size, offset=offset).copy()
        offset += size * 8
        arrays[name] = values.reshape(shape)
    return arrays, fingerprint
