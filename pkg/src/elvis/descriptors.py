"""Local descriptor sets, top-M selection, the learnable projection, and the ELVD file format.

ELVD layout (little-endian)::

    b"ELVD" | version u32 | image_count u32 | dim u32
    per image: id_len u16 | id utf-8 | M u32 | M x f32 strengths | M*dim x f32 descriptors

Descriptors are stored column-major per image, i.e. one descriptor's ``dim``
values are contiguous on disk.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .linalg import ShapeError, l2_normalize, layer_norm

MAGIC = b"ELVD"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class DatasetFormatError(ValueError):
    """Corrupt, truncated, or otherwise unreadable descriptor file."""


@dataclass
class RawDescriptorSet:
    image_id: str
    strengths: np.ndarray  # (M,)
    descriptors: np.ndarray  # (D', M)

    def __post_init__(self):
        self.strengths = np.asarray(self.strengths)
        self.descriptors = np.asarray(self.descriptors)
        if self.descriptors.ndim != 2:
            raise ShapeError("descriptors must be a (dim, count) matrix")
        if self.strengths.shape != (self.descriptors.shape[1],):
            raise ShapeError(
                f"{self.image_id}: {self.strengths.shape[0]} strengths for "
                f"{self.descriptors.shape[1]} descriptors"
            )
        if self.descriptors.shape[0] == 0 or self.descriptors.shape[1] == 0:
            raise ShapeError(f"{self.image_id}: empty descriptor set")

    @property
    def dim(self) -> int:
        return self.descriptors.shape[0]

    @property
    def count(self) -> int:
        return self.descriptors.shape[1]


@dataclass
class ProjectedDescriptorSet:
    image_id: str
    descriptors: np.ndarray  # (D, M), unit columns
    degenerate: np.ndarray = None  # (M,) bool

    def __post_init__(self):
        if self.degenerate is None:
            self.degenerate = np.zeros(self.descriptors.shape[1], dtype=bool)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[0]

    @property
    def count(self) -> int:
        return self.descriptors.shape[1]


@dataclass
class ProjectionParams:
    """Linear layer (row-major ``weight`` of shape (D, D')) followed by layer norm."""

    weight: np.ndarray
    bias: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    eps: float = 1e-5

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator, eps: float = 1e-5):
        bound = 1.0 / np.sqrt(in_dim)
        return cls(
            weight=rng.uniform(-bound, bound, size=(out_dim, in_dim)),
            bias=np.zeros(out_dim),
            ln_gain=np.ones(out_dim),
            ln_bias=np.zeros(out_dim),
            eps=eps,
        )


def select_top_m(raw: RawDescriptorSet, m: int) -> RawDescriptorSet:
    """Keep the ``m`` strongest descriptors, strongest first; ties go to the lower index."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    # stable sort on negated strengths gives descending order with index tie-break
    order = np.argsort(-raw.strengths, kind="stable")[:m]
    return RawDescriptorSet(raw.image_id, raw.strengths[order], raw.descriptors[:, order])


def project(raw: RawDescriptorSet, params: ProjectionParams | None) -> ProjectedDescriptorSet:
    """Linear map, layer norm, then l2 normalization of every descriptor.

    With ``params=None`` the raw descriptors are only l2-normalized, which is
    what the parameter-free baselines and the no-projection ablation use.
    """
    x = np.asarray(raw.descriptors, dtype=float)
    if params is None:
        out, degenerate = l2_normalize(x, axis=0)
        return ProjectedDescriptorSet(raw.image_id, out, degenerate)
    if params.in_dim != raw.dim:
        raise ShapeError(f"projection expects dim {params.in_dim}, got {raw.dim}")
    z = params.weight @ x + params.bias[:, None]
    y = layer_norm(z, params.ln_gain[:, None], params.ln_bias[:, None], params.eps, axis=0)
    out, degenerate = l2_normalize(y, axis=0)
    return ProjectedDescriptorSet(raw.image_id, out, degenerate)


# --- on-disk format -------------------------------------------------------


@dataclass
class DescriptorDataset:
    """Handle on an ELVD file with an id -> byte offset index built at open time."""

    path: Path
    image_count: int
    dim: int
    version: int = VERSION
    index: dict[str, int] = field(default_factory=dict)

    @classmethod
    def open(cls, path) -> "DescriptorDataset":
        path = Path(path)
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise DatasetFormatError(f"{path}: truncated header")
            magic, version, count, dim = _HEADER.unpack(head)
            if magic != MAGIC:
                raise DatasetFormatError(
                    f"{path}: bad magic {magic!r}, expected {MAGIC!r}"
                )
            if version != VERSION:
                raise DatasetFormatError(f"{path}: unsupported version {version}")
            ds = cls(path, count, dim, version)
            offset = _HEADER.size
            for _ in range(count):
                image_id, m = _read_record_header(fh, path)
                if image_id in ds.index:
                    raise DatasetFormatError(f"{path}: duplicate image id {image_id!r}")
                ds.index[image_id] = offset
                payload = 4 * m * (1 + dim)
                fh.seek(payload, 1)
                offset = fh.tell()
            if offset > path.stat().st_size:
                raise DatasetFormatError(f"{path}: truncated payload")
        return ds

    @property
    def image_ids(self) -> list[str]:
        return list(self.index)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.index

    def __len__(self) -> int:
        return self.image_count

    def read(self, image_id: str) -> RawDescriptorSet:
        return read_image(self, image_id)

    __getitem__ = read

    def read_all(self) -> dict[str, RawDescriptorSet]:
        return {i: read_image(self, i) for i in self.index}


def _read_record_header(fh, path):
    raw = fh.read(2)
    if len(raw) < 2:
        raise DatasetFormatError(f"{path}: truncated record header")
    (id_len,) = struct.unpack("<H", raw)
    id_bytes = fh.read(id_len)
    m_raw = fh.read(4)
    if len(id_bytes) < id_len or len(m_raw) < 4:
        raise DatasetFormatError(f"{path}: truncated record header")
    (m,) = struct.unpack("<I", m_raw)
    return id_bytes.decode("utf-8"), m


def read_image(ds: DescriptorDataset, image_id: str) -> RawDescriptorSet:
    try:
        offset = ds.index[image_id]
    except KeyError:
        raise KeyError(f"image id {image_id!r} not in {ds.path}") from None
    with open(ds.path, "rb") as fh:
        fh.seek(offset)
        read_id, m = _read_record_header(fh, ds.path)
        n_bytes = 4 * m * (1 + ds.dim)
        payload = fh.read(n_bytes)
    if len(payload) < n_bytes:
        raise DatasetFormatError(f"{ds.path}: truncated payload for {image_id!r}")
    values = np.frombuffer(payload, dtype="<f4")
    strengths = values[:m].copy()
    descriptors = values[m:].reshape(m, ds.dim).T.copy()
    return RawDescriptorSet(read_id, strengths, descriptors)


def write_dataset(sets: Iterable[RawDescriptorSet], path) -> DescriptorDataset:
    sets = list(sets)
    if not sets:
        raise ValueError("refusing to write an empty dataset")
    dim = sets[0].dim
    path = Path(path)
    seen = set()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(sets), dim))
        for s in sets:
            if s.dim != dim:
                raise ShapeError(f"{s.image_id}: dim {s.dim} != dataset dim {dim}")
            if s.image_id in seen:
                raise ValueError(f"duplicate image id {s.image_id!r}")
            seen.add(s.image_id)
            id_bytes = s.image_id.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<I", s.count))
            fh.write(np.asarray(s.strengths, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(np.asarray(s.descriptors, dtype="<f4").T).tobytes())
    return DescriptorDataset.open(path)
