"""Single-file binary checkpoint container.

Layout: 8-byte magic "ERMVCKPT", version u32, length-prefixed UTF-8 JSON
config echo (u32), then named tensors until EOF. Each tensor: name length
u16 + UTF-8 name, rank u8, one u32 per dimension, then the row-major
little-endian float32 payload. All integers little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ERMVCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config_echo: dict, tensors: dict) -> None:
    path = Path(path)
    blob = json.dumps(config_echo, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, tensor in tensors.items():
            arr = np.asarray(tensor, dtype="<f4")
            if not arr.flags.c_contiguous:
                arr = np.ascontiguousarray(arr)  # promotes 0-d, so only when needed
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint file not found: {path}")
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} in {path}")
    (blob_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    config_echo = json.loads(raw[off : off + blob_len].decode("utf-8"))
    off += blob_len

    tensors = {}
    total = len(raw)
    while off < total:
        if off + 2 > total:
            raise CheckpointError(f"truncated tensor header in {path}")
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<B", raw, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
        off += 4 * rank
        count = int(np.prod(dims)) if dims else 1
        nbytes = 4 * count
        if off + nbytes > total:
            raise CheckpointError(f"truncated tensor payload for {name!r} in {path}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(dims)
        tensors[name] = arr.copy()
        off += nbytes
    return config_echo, tensors
