"""Video-level descriptors: VLAD, average-pooled flat features, early fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from depthpipe.features.codebook import Codebook, assign

KINDS = ("fc6_pooled", "vlad", "early_fused")


@dataclass(frozen=True)
class VideoDescriptor:
    vector: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown descriptor kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


def l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


def vlad_encode(descriptors, cb: Codebook) -> VideoDescriptor:
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("vlad_encode needs a non-empty (n, d) descriptor array")
    if x.shape[1] != cb.dim:
        raise ValueError(f"descriptor dim {x.shape[1]} != codebook dim {cb.dim}")
    labels = assign(x, cb.centers)
    # canonical order (cluster, then row values) makes the sums order-independent
    order = np.lexsort(tuple(x[:, j] for j in range(x.shape[1] - 1, -1, -1)) + (labels,))
    labels, x = labels[order], x[order]
    resid = x - cb.centers[labels]
    blocks = np.zeros_like(cb.centers)
    present, starts = np.unique(labels, return_index=True)
    blocks[present] = np.add.reduceat(resid, starts, axis=0)
    norms = np.linalg.norm(blocks, axis=1, keepdims=True)
    blocks = np.divide(blocks, norms, out=np.zeros_like(blocks), where=norms > 0)
    return VideoDescriptor(l2_normalize(blocks.ravel()), "vlad")


def fc6_pool(per_frame_flats) -> VideoDescriptor:
    flats = np.asarray(per_frame_flats, dtype=np.float64)
    if flats.ndim != 2 or flats.shape[0] == 0:
        raise ValueError("fc6_pool needs a non-empty list of equal-length vectors")
    return VideoDescriptor(l2_normalize(flats.mean(axis=0)), "fc6_pooled")


def early_fuse(a: VideoDescriptor, b: VideoDescriptor) -> VideoDescriptor:
    """Flat block first; blocks are already unit or zero norm so no renormalisation."""
    return VideoDescriptor(np.concatenate([a.vector, b.vector]), "early_fused")
