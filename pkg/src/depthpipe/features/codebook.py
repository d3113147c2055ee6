"""Seeded k-means (k-means++ initialisation) for VLAD codebooks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray  # (K, d)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (x * x).sum(1)[:, None] - 2.0 * (x @ centers.T) + (centers * centers).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((x - x[chosen[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point already coincides with a center: take the first unused index
            used = set(chosen)
            idx = next(i for i in range(n) if i not in used)
        chosen.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(1))
    return x[chosen].copy()


def fit_codebook(descriptors, k: int, rng_seed: int = 0, max_iter: int = 100,
                 tol: float = 1e-4) -> Codebook:
    x = np.asarray(descriptors, dtype=np.float64)
    n, d = x.shape
    if k < 1 or n < k:
        raise ValueError(f"need at least k={k} descriptors, got {n}")
    rng = np.random.default_rng(rng_seed)
    centers = kmeans_pp_init(x, k, rng)
    prev = None
    for _ in range(max_iter):
        d2 = sq_distances(x, centers)
        labels = np.argmin(d2, axis=1)
        resid = d2[np.arange(n), labels]
        inertia = resid.sum()
        if prev is not None and abs(prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, d))
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centers = centers.copy()
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        # re-seed empty clusters at the worst-fit points, farthest first
        spare = resid.copy()
        for j in np.flatnonzero(~nonempty):
            far = int(np.argmax(spare))
            centers[j] = x[far]
            spare[far] = -1.0
    return Codebook(centers)


def assign(x: np.ndarray, centers: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Nearest center by exact squared differences; ties go to the lowest index."""
    labels = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], chunk):
        block = x[s:s + chunk]
        d2 = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        labels[s:s + chunk] = np.argmin(d2, axis=1)
    return labels
