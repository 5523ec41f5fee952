"""Deterministic checkpoint container.

Layout (all integers little-endian):

    magic            b"MT3DCKPT1\\n"
    u64              length of the config snapshot in bytes
    bytes            config snapshot (utf-8 text)
    u32              number of parameter arrays
    per parameter:
        u16          name length, then the utf-8 name
        u8           rank
        u64 * rank   dimensions
        bytes        float64 little-endian C-order data

Unlike zip-based containers the byte stream carries no timestamps, so the
same parameters and config always produce the same file hash.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MT3DCKPT1\n"


def save_checkpoint(path, params: dict[str, np.ndarray], config_text: str) -> None:
    chunks = [MAGIC]
    cfg = config_text.encode("utf-8")
    chunks.append(struct.pack("<Q", len(cfg)))
    chunks.append(cfg)
    chunks.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    off = len(MAGIC)

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise ValueError(f"{path}: truncated checkpoint")
        out = blob[off : off + n]
        off += n
        return out

    (cfg_len,) = struct.unpack("<Q", take(8))
    config_text = take(cfg_len).decode("utf-8")
    (n_params,) = struct.unpack("<I", take(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape)
        params[name] = data.astype(np.float64)
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return params, config_text
