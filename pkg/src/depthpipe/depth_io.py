"""Depth-sequence containers, `.dseq`/PGM I/O, manifests and synthetic sequences."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from depthpipe.errors import DataError, FormatError

DSEQ_MAGIC = b"DSEQ"
DSEQ_VERSION = 1
_DSEQ_HEADER = struct.Struct("<4sIIII")

SPLIT_ROLES = ("train", "test")


@dataclass(frozen=True)
class DepthSequence:
    """Ordered depth frames of one video, stored as a read-only (T, H, W) float32 array.

    Values are meters; every value is finite and >= 0.
    """

    frames: np.ndarray
    video_id: str = ""

    def __post_init__(self):
        arr = np.array(self.frames, dtype=np.float32, copy=True)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValueError(f"frames must be (T, H, W), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"empty sequence or frame: shape {arr.shape}")
        bad = ~np.isfinite(arr) | (arr < 0)
        if bad.any():
            t = int(np.argwhere(bad)[0, 0])
            raise FormatError(f"frame {t}: values must be finite and >= 0")
        arr.flags.writeable = False
        object.__setattr__(self, "frames", arr)

    def __len__(self) -> int:
        return self.frames.shape[0]

    def __getitem__(self, t):
        return self.frames[t]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def with_frames(self, frames: np.ndarray) -> "DepthSequence":
        return DepthSequence(frames, self.video_id)


# ---------------------------------------------------------------------------
# .dseq container


def write_sequence(seq: DepthSequence, path) -> None:
    path = Path(path)
    t, h, w = seq.frames.shape
    header = _DSEQ_HEADER.pack(DSEQ_MAGIC, DSEQ_VERSION, w, h, t)
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _read_dseq(path: Path) -> DepthSequence:
    data = path.read_bytes()
    if len(data) < _DSEQ_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, w, h, t = _DSEQ_HEADER.unpack_from(data)
    if magic != DSEQ_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != DSEQ_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if w == 0 or h == 0 or t == 0:
        raise FormatError(f"{path}: zero dimension in header ({w}x{h}x{t})")
    expected = t * h * w * 4
    body = data[_DSEQ_HEADER.size:]
    if len(body) != expected:
        got_frames = len(body) // (h * w * 4)
        raise FormatError(
            f"{path}: frame {got_frames}: payload has {len(body)} bytes, expected {expected}"
        )
    frames = np.frombuffer(body, dtype="<f4").reshape(t, h, w).astype(np.float32)
    _check_frames(frames, path)
    return DepthSequence(frames, video_id=path.stem)


def _check_frames(frames: np.ndarray, path) -> None:
    for i, fr in enumerate(frames):
        if not np.all(np.isfinite(fr)):
            raise FormatError(f"{path}: frame {i}: non-finite depth value")
        if np.any(fr < 0):
            raise FormatError(f"{path}: frame {i}: negative depth value")


# ---------------------------------------------------------------------------
# 16-bit PGM directories


def _pgm_tokens(data: bytes, count: int):
    """Return the first `count` header tokens and the offset just past them."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM as an integer array of raw sample values."""
    path = Path(path)
    data = path.read_bytes()
    try:
        tokens, offset = _pgm_tokens(data, 4)
        if tokens[0] != b"P5":
            raise ValueError(f"unsupported magic {tokens[0]!r}")
        w, h, maxval = (int(tok) for tok in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header ({exc})") from exc
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: maxval {maxval} out of range")
    dtype = ">u2" if maxval > 255 else "u1"
    nbytes = w * h * np.dtype(dtype).itemsize
    raster = data[offset:offset + nbytes]
    if len(raster) != nbytes:
        raise FormatError(f"{path}: raster truncated")
    return np.frombuffer(raster, dtype=dtype).reshape(h, w).astype(np.uint16)


def write_pgm(values: np.ndarray, path, maxval: int = 65535) -> None:
    values = np.asarray(values)
    h, w = values.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    Path(path).write_bytes(header + values.astype(dtype).tobytes())


def write_pgm_dir(seq: DepthSequence, directory, scale: float) -> None:
    """Quantize a sequence to 16-bit PGM frames plus a `scale.txt` sidecar (meters per unit)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = np.rint(seq.frames.astype(np.float64) / scale)
    if raw.max() > 65535:
        raise ValueError("depth exceeds 16-bit range at this scale")
    for t, frame in enumerate(raw):
        write_pgm(frame.astype(np.uint16), directory / f"f{t:03d}.pgm")
    (directory / "scale.txt").write_text(repr(float(scale)) + "\n")


def _read_pgm_dir(directory: Path) -> DepthSequence:
    scale_file = directory / "scale.txt"
    if not scale_file.exists():
        raise FormatError(f"{directory}: missing scale.txt")
    try:
        scale = float(scale_file.read_text().strip())
    except ValueError as exc:
        raise FormatError(f"{scale_file}: malformed scale") from exc
    if not math.isfinite(scale) or scale <= 0:
        raise FormatError(f"{scale_file}: scale must be positive and finite")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise FormatError(f"{directory}: no PGM frames")
    frames = []
    for i, p in enumerate(files):
        try:
            raw = read_pgm(p)
        except FormatError as exc:
            raise FormatError(f"frame {i}: {exc}") from exc
        if frames and raw.shape != frames[0].shape:
            raise FormatError(
                f"{directory}: frame {i} has shape {raw.shape}, expected {frames[0].shape}"
            )
        frames.append(raw)
    values = np.stack(frames).astype(np.float64) * scale
    return DepthSequence(values.astype(np.float32), video_id=directory.name)


def read_sequence(path) -> DepthSequence:
    """Read a `.dseq` container or a directory of 16-bit PGM frames."""
    path = Path(path)
    if path.is_dir():
        return _read_pgm_dir(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    return _read_dseq(path)


# ---------------------------------------------------------------------------
# synthetic sequences


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "static"
    base_depth: float = 3.0
    amplitude: float = 0.0
    noise_sigma: float = 0.0
    frames: int = 16
    width: int = 32
    height: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("static", "oscillate", "ramp"):
            raise ValueError(f"unknown synth kind {self.kind!r}")
        if self.frames < 1 or self.width < 1 or self.height < 1:
            raise ValueError("frames, width and height must be >= 1")
        if self.amplitude < 0 or self.noise_sigma < 0:
            raise ValueError("amplitude and noise_sigma must be >= 0")


def synth_profile(spec: SynthSpec) -> np.ndarray:
    """Noise-free per-frame depth offset curve for `spec` (length `frames`)."""
    t = np.arange(spec.frames, dtype=np.float64)
    if spec.kind == "oscillate":
        return spec.amplitude * np.sin(2 * np.pi * t / spec.frames)
    if spec.kind == "ramp":
        return spec.amplitude * (t / spec.frames)
    return np.zeros(spec.frames)


def synth_sequence(spec: SynthSpec, video_id: str = "") -> DepthSequence:
    rng = np.random.default_rng(spec.rng_seed)
    shape = (spec.frames, spec.height, spec.width)
    # noise is drawn first and for every kind, so kinds with the same seed share it
    noise = rng.standard_normal(shape) * spec.noise_sigma
    values = spec.base_depth + synth_profile(spec)[:, None, None] + noise
    return DepthSequence(np.maximum(values, 0.0).astype(np.float32), video_id=video_id)


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    path: Path
    label: str
    splits: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    split_names: tuple

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.video_id in seen:
                raise DataError(f"duplicate video_id {e.video_id!r}")
            seen.add(e.video_id)
            for s in self.split_names:
                if e.splits.get(s) not in SPLIT_ROLES:
                    raise DataError(f"{e.video_id}: split {s} must be train or test")

    def __len__(self):
        return len(self.entries)

    @property
    def video_ids(self) -> list:
        return [e.video_id for e in self.entries]

    @property
    def labels(self) -> list:
        return [e.label for e in self.entries]

    def split_ids(self, split: str, role: str) -> list:
        if split not in self.split_names:
            raise DataError(f"unknown split {split!r}")
        return [e.video_id for e in self.entries if e.splits[split] == role]


def read_manifest(path, check_paths: bool = True) -> DatasetManifest:
    """Load a manifest CSV; relative paths resolve against the manifest's directory."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty manifest") from None
        if header[:3] != ["video_id", "path", "label"] or len(header) < 4:
            raise DataError(f"{path}: bad header {header}")
        split_names = tuple(header[3:])
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells")
            vid, rel, label, *roles = row
            p = Path(rel)
            if not p.is_absolute():
                p = path.parent / p
            if check_paths and not p.exists():
                raise DataError(f"{path}:{lineno}: {vid}: missing {p}")
            entries.append(ManifestEntry(vid, p, label, dict(zip(split_names, roles))))
    return DatasetManifest(tuple(entries), split_names)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "path", "label", *manifest.split_names])
        for e in manifest.entries:
            p = Path(e.path)
            try:
                p = p.relative_to(path.parent)
            except ValueError:
                pass
            writer.writerow([e.video_id, p.as_posix(), e.label, *(e.splits[s] for s in manifest.split_names)])
