"""Frame-level feature extraction and latent-concept descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from depthpipe.errors import ConfigError
from depthpipe.normalize import nearest_rank_percentile


@dataclass(frozen=True)
class FrameFeatures:
    flat: np.ndarray  # (F,)
    map: np.ndarray  # (H, W, C)


class FrameExtractor:
    """Maps one 2D frame to a flat vector and a spatial feature map of fixed shape."""

    name = "base"
    flat_dim: int
    map_shape: tuple

    def extract(self, frame: np.ndarray) -> FrameFeatures:
        raise NotImplementedError

    def signature(self) -> str:
        return f"{self.name}:{self.flat_dim}:{'x'.join(map(str, self.map_shape))}"


def grid_edges(n: int, cells: int) -> np.ndarray:
    return (np.arange(cells + 1) * n) // cells


def grid_pool(img: np.ndarray, gh: int, gw: int, reduce=np.mean) -> np.ndarray:
    """Reduce a (h, w, ...) array over a gh x gw grid of near-equal cells."""
    h, w = img.shape[:2]
    if gh > h or gw > w:
        raise ValueError(f"{gh}x{gw} grid exceeds {h}x{w} extent")
    re, ce = grid_edges(h, gh), grid_edges(w, gw)
    out = np.empty((gh, gw) + img.shape[2:])
    for i in range(gh):
        for j in range(gw):
            out[i, j] = reduce(img[re[i]:re[i + 1], ce[j]:ce[j + 1]], axis=(0, 1))
    return out


def _gradients(frame: np.ndarray):
    f = frame.astype(np.float64)
    dx = np.abs(np.diff(f, axis=1, append=f[:, -1:]))
    dy = np.abs(np.diff(f, axis=0, append=f[-1:, :]))
    return f, dx, dy


class ToyExtractor(FrameExtractor):
    """Deterministic stand-in for a trained ConvNet.

    `flat` holds grid-pooled depth and gradient magnitudes at several grid
    sizes, tiled out to `flat_dim`. `map` is an H x W grid average-pool whose
    channels cycle through depth, |d/dx|, |d/dy| and the cell's 95th
    percentile depth.
    """

    name = "toy"
    flat_levels = (1, 2, 4, 8)

    def __init__(self, flat_dim: int = 4096, map_shape=(7, 7, 512)):
        if flat_dim < 1 or len(map_shape) != 3 or min(map_shape) < 1:
            raise ConfigError(f"bad extractor dims flat={flat_dim} map={map_shape}")
        self.flat_dim = int(flat_dim)
        self.map_shape = tuple(int(s) for s in map_shape)

    def _flat(self, f, dx, dy) -> np.ndarray:
        h, w = f.shape
        parts = []
        for g in self.flat_levels:
            if g > min(h, w):
                break
            for img in (f, dx, dy):
                parts.append(grid_pool(img, g, g).ravel())
        base = np.concatenate(parts)
        return np.resize(base, self.flat_dim)

    def _map(self, f, dx, dy) -> np.ndarray:
        gh, gw, c = self.map_shape
        h, w = f.shape
        if gh > h or gw > w:
            raise ConfigError(f"frame {h}x{w} smaller than the {gh}x{gw} feature grid")
        stacked = np.stack([f, dx, dy], axis=-1)
        pooled = grid_pool(stacked, gh, gw)
        p95 = grid_pool(f, gh, gw, reduce=lambda a, axis: nearest_rank_percentile(a, 95.0))
        variants = np.concatenate([pooled, p95[..., None]], axis=-1)
        return variants[..., np.arange(c) % variants.shape[-1]]

    def extract(self, frame: np.ndarray) -> FrameFeatures:
        frame = np.asarray(frame)
        if frame.ndim != 2:
            raise ConfigError(f"expected a 2D frame, got shape {frame.shape}")
        f, dx, dy = _gradients(frame)
        return FrameFeatures(self._flat(f, dx, dy), self._map(f, dx, dy))


EXTRACTORS = {"toy": ToyExtractor}


def make_extractor(name: str, **kwargs) -> FrameExtractor:
    try:
        cls = EXTRACTORS[name]
    except KeyError:
        raise ConfigError(f"unknown extractor {name!r}; known: {sorted(EXTRACTORS)}") from None
    return cls(**kwargs)


def extract_frame_features(frame: np.ndarray, extractor: FrameExtractor) -> FrameFeatures:
    feats = extractor.extract(frame)
    if feats.flat.shape != (extractor.flat_dim,) or feats.map.shape != tuple(extractor.map_shape):
        raise ConfigError(
            f"extractor {extractor.name} produced flat {feats.flat.shape} / map {feats.map.shape}, "
            f"declared ({extractor.flat_dim},) / {tuple(extractor.map_shape)}"
        )
    return feats


def lcd(fmap: np.ndarray) -> np.ndarray:
    """One C-dim descriptor per spatial cell, row-major: descriptor i*W + j is fmap[i, j]."""
    h, w, c = fmap.shape
    return np.asarray(fmap, dtype=np.float64).reshape(h * w, c).copy()


def spp_augment(fmap: np.ndarray, levels=(1, 2)) -> np.ndarray:
    """Base LCDs followed by g*g channelwise max-pooled descriptors for each pyramid level g."""
    h, w, c = fmap.shape
    out = [lcd(fmap)]
    for g in levels:
        if g < 1 or g > min(h, w):
            raise ValueError(f"pyramid level {g} exceeds the {h}x{w} map")
        out.append(grid_pool(np.asarray(fmap, dtype=np.float64), g, g, reduce=np.max).reshape(g * g, c))
    return np.concatenate(out, axis=0)


def spp_count(h: int, w: int, levels=(1, 2)) -> int:
    return h * w + sum(g * g for g in levels)
