"""Depth motion: adjacent-frame differences and clip-level modified depth motion maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from depthpipe.depth_io import DepthSequence

DEFAULT_CLIP_LEN = 10


@dataclass(frozen=True)
class Clip:
    source: DepthSequence
    t_start: int
    length_n: int

    def __post_init__(self):
        if self.length_n < 2:
            raise ValueError("a clip needs at least 2 frames")
        if self.t_start < 0 or self.t_start + self.length_n > len(self.source):
            raise ValueError(
                f"clip [{self.t_start}, {self.t_start + self.length_n}) exceeds "
                f"{len(self.source)} frames"
            )

    @property
    def frames(self) -> np.ndarray:
        return self.source.frames[self.t_start:self.t_start + self.length_n]


@dataclass(frozen=True)
class Mdmm:
    energy: np.ndarray  # (H, W) float64, >= 0
    t_start: int = 0

    @property
    def height(self) -> int:
        return self.energy.shape[0]

    @property
    def width(self) -> int:
        return self.energy.shape[1]


def abs_diff_sequence(seq: DepthSequence) -> DepthSequence:
    if len(seq) < 2:
        raise ValueError("abs_diff_sequence needs at least 2 frames")
    f = seq.frames.astype(np.float64)
    return seq.with_frames(np.abs(f[1:] - f[:-1]).astype(np.float32))


def mdmm(clip: Clip) -> Mdmm:
    """Accumulate the length_n - 1 absolute differences inside the clip, unthresholded."""
    f = clip.frames.astype(np.float64)
    energy = np.zeros(f.shape[1:])
    for t in range(f.shape[0] - 1):
        energy += np.abs(f[t + 1] - f[t])
    return Mdmm(energy, clip.t_start)


def tile_clips(seq: DepthSequence, n: int) -> list:
    if n < 2:
        raise ValueError("clip length must be >= 2")
    clips = []
    for start in range(0, len(seq), n):
        length = min(n, len(seq) - start)
        if length >= 2:
            clips.append(Clip(seq, start, length))
    return clips


def mdmm_tiling(seq: DepthSequence, n: int = DEFAULT_CLIP_LEN) -> list:
    if len(seq) < 2:
        raise ValueError("mdmm_tiling needs at least 2 frames")
    return [mdmm(c) for c in tile_clips(seq, n)]


def mdmm_count(total_frames: int, n: int) -> int:
    return total_frames // n + (1 if total_frames % n >= 2 else 0)


def mdmm_stack(maps: list, video_id: str = "") -> DepthSequence:
    """Pack MDMMs as frames of one sequence (for `.dseq` export and feature extraction)."""
    return DepthSequence(np.stack([m.energy for m in maps]).astype(np.float32), video_id)


def export_png(m: Mdmm, path) -> None:
    from PIL import Image

    e = np.asarray(m.energy, dtype=np.float64)
    lo, hi = e.min(), e.max()
    if hi > lo:
        pixels = np.rint((e - lo) / (hi - lo) * 255.0)
    else:
        pixels = np.zeros_like(e)
    Image.fromarray(pixels.astype(np.uint8)).save(path, format="PNG")
