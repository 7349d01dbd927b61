"""Chunked binary checkpoint container.

Layout: magic "WPRT", u32 version, u32 JSON length + config JSON (sorted
keys), u32 tensor count, then per tensor: u16 name length, name, u8 ndim,
u32 dims, row-major float32 data.  Writing the same state twice produces
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"WPRT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    payload = [MAGIC, struct.pack("<I", VERSION)]
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload.append(struct.pack("<I", len(blob)))
    payload.append(blob)
    payload.append(struct.pack("<I", len(tensors)))
    for name in tensors:  # caller supplies a deterministic order
        arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
        nb = name.encode("utf-8")
        payload.append(struct.pack("<H", len(nb)))
        payload.append(nb)
        payload.append(struct.pack("<B", arr.ndim))
        payload.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(arr.tobytes())
    Path(path).write_bytes(b"".join(payload))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: version {version}, expected {VERSION}")
    (jlen,) = struct.unpack("<I", take(4))
    config = json.loads(bytes(take(jlen)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = bytes(take(nlen)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape)
        tensors[name] = arr.astype(np.float64)
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return config, tensors
