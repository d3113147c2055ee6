"""Binary containers for feature matrices, PCA models and codebooks (little-endian float32)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from depthpipe.errors import FormatError
from depthpipe.features.codebook import Codebook
from depthpipe.features.encode import KINDS
from depthpipe.features.pca import PcaModel

FTR_MAGIC = b"FTRV"
FTR_VERSION = 1
_FTR_HEADER = struct.Struct("<4sIIBI")
_MODEL_HEADER = struct.Struct("<4sII")


def _f32(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _body(data: bytes, offset: int, count: int, path) -> np.ndarray:
    nbytes = count * 4
    if len(data) - offset != nbytes:
        raise FormatError(f"{path}: payload has {len(data) - offset} bytes, expected {nbytes}")
    return np.frombuffer(data, dtype="<f4", offset=offset).astype(np.float64)


def write_features(path, vectors, kind: str) -> None:
    vectors = np.atleast_2d(np.asarray(vectors))
    count, dim = vectors.shape
    header = _FTR_HEADER.pack(FTR_MAGIC, FTR_VERSION, dim, KINDS.index(kind), count)
    Path(path).write_bytes(header + _f32(vectors))


def read_features(path):
    """Return (matrix of shape (count, dim), kind)."""
    data = Path(path).read_bytes()
    if len(data) < _FTR_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, tag, count = _FTR_HEADER.unpack_from(data)
    if magic != FTR_MAGIC or version != FTR_VERSION:
        raise FormatError(f"{path}: not a version-{FTR_VERSION} feature file")
    if tag >= len(KINDS):
        raise FormatError(f"{path}: unknown kind tag {tag}")
    body = _body(data, _FTR_HEADER.size, count * dim, path)
    return body.reshape(count, dim), KINDS[tag]


def save_pca(model: PcaModel, path) -> None:
    d, c = model.projection.shape
    Path(path).write_bytes(_MODEL_HEADER.pack(b"PCAM", d, c) + _f32(model.mean) + _f32(model.projection))


def load_pca(path) -> PcaModel:
    data = Path(path).read_bytes()
    magic, d, c = _MODEL_HEADER.unpack_from(data)
    if magic != b"PCAM":
        raise FormatError(f"{path}: bad magic {magic!r}")
    body = _body(data, _MODEL_HEADER.size, c + d * c, path)
    return PcaModel(body[:c].copy(), body[c:].reshape(d, c).copy())


def save_codebook(cb: Codebook, path) -> None:
    k, d = cb.centers.shape
    Path(path).write_bytes(_MODEL_HEADER.pack(b"CDBK", k, d) + _f32(cb.centers))


def load_codebook(path) -> Codebook:
    data = Path(path).read_bytes()
    magic, k, d = _MODEL_HEADER.unpack_from(data)
    if magic != b"CDBK":
        raise FormatError(f"{path}: bad magic {magic!r}")
    return Codebook(_body(data, _MODEL_HEADER.size, k * d, path).reshape(k, d).copy())
