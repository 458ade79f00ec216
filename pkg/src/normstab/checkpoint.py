"""Binary checkpoint container.

Layout (all integers and floats little-endian)::

    magic      4 bytes  b"NSCK"
    version    u32
    epoch      u64
    lr         f64
    seed       u64
    rng_ctr    u64
    count      u32      number of tensors
    count x:
        name_len u32, name (utf-8), rank u32, dims u64 * rank,
        data f64 * prod(dims), row-major

Tensor names are free-form; optimizer moments are stored under prefixes such
as ``velocity/W_hh`` or ``adam_m/W_hh``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"NSCK"
VERSION = 1
_HEADER = struct.Struct("<4sIQdQQI")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    epoch: int = 0
    learning_rate: float = 0.0
    seed: int = 0
    rng_counter: int = 0
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    parts = [_HEADER.pack(MAGIC, VERSION, ckpt.epoch, ckpt.learning_rate, ckpt.seed,
                          ckpt.rng_counter, len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).astype("<f8").tobytes())
    try:
        path.write_bytes(b"".join(parts))
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(buf) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, epoch, lr, seed, ctr, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = _HEADER.size
    tensors = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", buf, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", buf, off)
            off += 8 * rank
            size = int(np.prod(dims, dtype=np.int64))
            data = np.frombuffer(buf, dtype="<f8", count=size, offset=off)
            off += 8 * size
            tensors[name] = data.astype(np.float64).reshape(dims)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt tensor block ({exc})") from exc
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return Checkpoint(epoch, lr, seed, ctr, tensors)
