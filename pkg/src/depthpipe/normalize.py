"""Temporal depth normalization.

STDN rescales each horizontal band of every frame so that its far-depth level
(a nearest-rank percentile) matches the level of the same band pooled over the
surrounding window of frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from depthpipe.depth_io import DepthSequence


@dataclass(frozen=True)
class StdnConfig:
    window_n: int = 16
    bands: int = 3
    percentile_p: float = 95.0

    def __post_init__(self):
        if self.window_n < 1:
            raise ValueError("window_n must be >= 1")
        if self.bands < 1:
            raise ValueError("bands must be >= 1")
        if not 0 < self.percentile_p <= 100:
            raise ValueError("percentile_p must lie in (0, 100]")


# normalization windows used for the UCF101/ActivityNet and HMDB51 settings
WINDOW_UCF101 = 16
WINDOW_HMDB51 = 8


def nearest_rank_percentile(values, p: float) -> float:
    """Element of rank ceil(p/100 * M) (1-based) among the sorted values."""
    arr = np.asarray(values).ravel()
    m = arr.size
    if m == 0:
        raise ValueError("percentile of an empty array")
    if not 0 < p <= 100:
        raise ValueError("p must lie in (0, 100]")
    rank = min(max(math.ceil(p * m / 100), 1), m)
    return arr[np.argpartition(arr, rank - 1)[rank - 1]].item()


def band_partition(height: int, bands: int) -> list:
    """Row ranges [start, end) of `bands` horizontal bands; earlier bands take the remainder rows."""
    if bands < 1 or height < bands:
        raise ValueError(f"cannot split {height} rows into {bands} bands")
    base, extra = divmod(height, bands)
    ranges, start = [], 0
    for b in range(bands):
        end = start + base + (1 if b < extra else 0)
        ranges.append((start, end))
        start = end
    return ranges


def window_starts(length: int, window_n: int) -> range:
    return range(0, length, window_n)


def stdn(seq: DepthSequence, cfg: StdnConfig = StdnConfig()) -> DepthSequence:
    frames = seq.frames
    t_total, height, _ = frames.shape
    if height < cfg.bands:
        raise ValueError(f"height {height} < bands {cfg.bands}")
    out = frames.astype(np.float64)
    for start in window_starts(t_total, cfg.window_n):
        stop = min(start + cfg.window_n, t_total)
        for r0, r1 in band_partition(height, cfg.bands):
            block = frames[start:stop, r0:r1, :]
            d_ref = nearest_rank_percentile(block, cfg.percentile_p)
            for t in range(stop - start):
                d_t = nearest_rank_percentile(block[t], cfg.percentile_p)
                if d_t == 0:
                    continue
                out[start + t, r0:r1, :] *= d_ref / d_t
    return seq.with_frames(out.astype(np.float32))


def intra_frame_normalize(seq: DepthSequence) -> DepthSequence:
    """Scale every frame by its own maximum; all-zero frames pass through."""
    frames = seq.frames.astype(np.float64)
    peak = frames.max(axis=(1, 2), keepdims=True)
    scale = np.where(peak > 0, peak, 1.0)
    return seq.with_frames((frames / scale).astype(np.float32))
