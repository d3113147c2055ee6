from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (C,)
    projection: np.ndarray  # (d, C), orthonormal rows, eigenvalue-descending
    variances: np.ndarray | None = None  # (d,) eigenvalues, absent when loaded from disk

    @property
    def dim(self) -> int:
        return self.projection.shape[0]

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]


def fit_pca(descriptors, d: int) -> PcaModel:
    """Top-d principal axes of the sample covariance.

    Each axis is signed so its largest-magnitude coordinate is positive.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("descriptors must be a 2D array")
    n, c = x.shape
    if d < 1 or d > c:
        raise ValueError(f"target dim {d} outside [1, {c}]")
    if n < d:
        raise ValueError(f"{n} samples cannot support {d} components")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    idx = np.arange(c - 1, c - 1 - d, -1)  # eigh is ascending
    proj = evecs[:, idx].T.copy()
    lead = np.argmax(np.abs(proj), axis=1)
    signs = np.sign(proj[np.arange(d), lead])
    proj *= signs[:, None]
    return PcaModel(mean, proj, np.maximum(evals[idx], 0.0))


def pca_transform(model: PcaModel, v, whiten: bool = False) -> np.ndarray:
    """Project one C-vector or an (n, C) batch; optional whitening divides by the axis std."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.input_dim:
        raise ValueError(f"input dim {v.shape[-1]} != model dim {model.input_dim}")
    out = (v - model.mean) @ model.projection.T
    if whiten:
        if model.variances is None:
            raise ValueError("whitening needs the fitted variances")
        out = out / np.sqrt(np.maximum(model.variances, 1e-12))
    return out


def pca_reconstruct(model: PcaModel, z) -> np.ndarray:
    return model.mean + np.asarray(z) @ model.projection
