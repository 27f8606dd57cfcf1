"""ELVC checkpoint files: named float64 tensors, little-endian.

Layout: b"ELVC" | version u32 | tensor count u32, then per tensor
name_len u16 | name utf-8 | rank u32 | rank x u32 dims | float64 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..model import ModelParams

MAGIC = b"ELVC"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", MAGIC, VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())
    return path


def _read(fh, n, path):
    buf = fh.read(n)
    if len(buf) < n:
        raise CheckpointFormatError(f"{path}: truncated checkpoint")
    return buf


def load_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    out = {}
    with open(path, "rb") as fh:
        magic, version, count = struct.unpack("<4sII", _read(fh, 12, path))
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise CheckpointFormatError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(fh, 2, path))
            name = _read(fh, name_len, path).decode("utf-8")
            (rank,) = struct.unpack("<I", _read(fh, 4, path))
            dims = struct.unpack(f"<{rank}I", _read(fh, 4 * rank, path))
            size = int(np.prod(dims, dtype=np.int64)) if rank else 1
            data = np.frombuffer(_read(fh, 8 * size, path), dtype="<f8")
            out[name] = data.reshape(dims).astype(np.float64)
        if fh.read(1):
            raise CheckpointFormatError(f"{path}: trailing bytes after {count} tensors")
    return out


def save_model(path, model: ModelParams) -> Path:
    return save_tensors(path, model.named_tensors())


def load_model(path, ln_eps: float = 1e-5) -> ModelParams:
    return ModelParams.from_tensors(load_tensors(path), ln_eps=ln_eps)
