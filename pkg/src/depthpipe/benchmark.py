"""Synthetic two-class benchmark whose classes differ only in depth dynamics.

Every video is a far static background with a nearer rectangular region. In
`static` videos the region holds its depth; in `oscillate` videos it moves
through one sinusoidal period along the viewing axis. The scene parameters
are drawn once per index and shared by both classes, so single-frame depth
statistics match while clip-level motion energy does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from depthpipe.depth_io import (
    DatasetManifest,
    DepthSequence,
    ManifestEntry,
    SynthSpec,
    synth_sequence,
    write_manifest,
    write_sequence,
)

CLASSES = ("static", "oscillate")


@dataclass(frozen=True)
class BenchmarkSpec:
    frames: int = 30
    width: int = 32
    height: int = 32
    background_depth: tuple = (4.0, 6.0)
    region_depth: tuple = (1.5, 3.0)
    region_size: tuple = (8, 14)
    amplitude: float = 0.4
    noise_sigma: float = 0.02
    train_fraction: float = 0.8
    centered: bool = True
    tilt: float = 0.8  # max depth change across the region, per axis


def benchmark_video(kind: str, scene: dict, spec: BenchmarkSpec, seed: int, video_id: str) -> DepthSequence:
    common = dict(noise_sigma=spec.noise_sigma, frames=spec.frames)
    bg = synth_sequence(SynthSpec("static", scene["bg"], 0.0, width=spec.width, height=spec.height,
                                  rng_seed=seed, **common))
    r0, c0, rh, rw = scene["region"]
    frames = bg.frames.copy()
    fg = synth_sequence(SynthSpec(kind, scene["fg"], spec.amplitude, width=rw, height=rh,
                                  rng_seed=seed + 1, **common))
    gy, gx = scene["tilt"]
    plane = gy * (np.arange(rh)[:, None] - (rh - 1) / 2) + gx * (np.arange(rw)[None, :] - (rw - 1) / 2)
    frames[:, r0:r0 + rh, c0:c0 + rw] = np.maximum(fg.frames + plane, 0.0)
    return DepthSequence(frames, video_id)


def draw_scenes(n: int, spec: BenchmarkSpec, rng: np.random.Generator) -> list:
    scenes = []
    for _ in range(n):
        rh, rw = (int(v) for v in rng.integers(spec.region_size[0], spec.region_size[1] + 1, size=2))
        r0 = int(rng.integers(0, spec.height - rh + 1))
        c0 = int(rng.integers(0, spec.width - rw + 1))
        if spec.centered:
            r0, c0 = (spec.height - rh) // 2, (spec.width - rw) // 2
        scenes.append({
            "bg": float(rng.uniform(*spec.background_depth)),
            "fg": float(rng.uniform(*spec.region_depth)),
            "region": (r0, c0, rh, rw),
            "tilt": tuple(float(g) for g in rng.uniform(-1, 1, size=2) * spec.tilt / np.array([rh, rw])),
        })
    return scenes


def make_benchmark(out_dir, videos_per_class: int = 50, rng_seed: int = 7,
                   spec: BenchmarkSpec = BenchmarkSpec()) -> DatasetManifest:
    """Write `seqs/*.dseq` and a one-split `manifest.csv` under out_dir."""
    if videos_per_class < 1:
        raise ValueError("videos_per_class must be >= 1")
    out_dir = Path(out_dir)
    (out_dir / "seqs").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(rng_seed)
    scenes = draw_scenes(videos_per_class, spec, rng)
    noise_seeds = rng.integers(0, 2**31, size=(videos_per_class, len(CLASSES)))
    n_train = round(spec.train_fraction * videos_per_class)
    entries = []
    # classes interleaved so any prefix of the manifest stays class-balanced
    for i, scene in enumerate(scenes):
        for c, kind in enumerate(CLASSES):
            vid = f"{kind}_{i:03d}"
            seq = benchmark_video(kind, scene, spec, int(noise_seeds[i, c]), vid)
            path = out_dir / "seqs" / f"{vid}.dseq"
            write_sequence(seq, path)
            role = "train" if i < n_train else "test"
            entries.append(ManifestEntry(vid, path, kind, {"split1": role}))
    manifest = DatasetManifest(tuple(entries), ("split1",))
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
