"""End-to-end run: normalize -> motion maps -> encode -> SVM -> fuse -> evaluate.

Every intermediate is cached under a content-hash key, so an unchanged rerun
reads everything back instead of recomputing it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from depthpipe import classify
from depthpipe.config import PipelineConfig
from depthpipe.depth_io import DatasetManifest, read_sequence
from depthpipe.errors import DataError
from depthpipe.features import (
    Codebook,
    PcaModel,
    VideoDescriptor,
    early_fuse,
    extract_frame_features,
    fc6_pool,
    fit_codebook,
    fit_pca,
    make_extractor,
    pca_transform,
    spp_augment,
    vlad_encode,
    write_features,
)
from depthpipe.motion import mdmm_tiling
from depthpipe.normalize import intra_frame_normalize, stdn

log = logging.getLogger(__name__)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def file_digest(path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
    for p in files:
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


class Cache:
    """Directory of `.npz` artifacts named by stage and key digest."""

    def __init__(self, root):
        self.root = Path(root)
        self.hits = Counter()
        self.misses = Counter()

    def _path(self, stage: str, key: str) -> Path:
        return self.root / stage / f"{key}.npz"

    def get_or_compute(self, stage: str, key: str, compute) -> dict:
        path = self._path(stage, key)
        if path.exists():
            self.hits[stage] += 1
            with np.load(path, allow_pickle=False) as z:
                return {k: z[k] for k in z.files}
        self.misses[stage] += 1
        arrays = compute()
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f"{path.stem}.{os.getpid()}.tmp")
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
        return arrays


# ---------------------------------------------------------------------------
# per-video stages (top-level so worker processes can run them)


def prepare_video(path, cfg: PipelineConfig) -> dict:
    """Normalized depth frames and the MDMM stack for one video."""
    seq = read_sequence(path)
    if cfg.norm_mode == "stdn":
        seq = stdn(seq, cfg.stdn)
    elif cfg.norm_mode == "intra":
        seq = intra_frame_normalize(seq)
    if len(seq) < 2:
        raise DataError(f"{path}: a motion stream needs at least 2 frames")
    maps = mdmm_tiling(seq, cfg.clip_len_n)
    return {
        "spatial": np.ascontiguousarray(seq.frames[::cfg.stride]),
        "temporal": np.stack([m.energy for m in maps]),
    }


def extract_stream(frames: np.ndarray, cfg: PipelineConfig):
    """Per-frame flat vectors (n, F) and pooled LCDs (n * count, C) for a stack of frames."""
    ex = make_extractor(cfg.extractor, flat_dim=cfg.flat_dim, map_shape=cfg.map_shape)
    flats, lcds = [], []
    for frame in frames:
        ff = extract_frame_features(frame, ex)
        flats.append(ff.flat)
        lcds.append(spp_augment(ff.map, cfg.spp_levels))
    return np.array(flats), np.concatenate(lcds)


def _prepare_job(args):
    vid, path, cfg = args
    try:
        return vid, prepare_video(path, cfg), None
    except Exception as exc:  # reported per video; strict mode turns it into a run failure
        return vid, None, f"{type(exc).__name__}: {exc}"


def _pmap(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _subsample(x: np.ndarray, limit: int, seed) -> np.ndarray:
    if x.shape[0] <= limit:
        return x
    idx = np.sort(np.random.default_rng(seed).choice(x.shape[0], size=limit, replace=False))
    return x[idx]


def _f32(a) -> np.ndarray:
    """Round through float32, the precision of the on-disk model formats."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    report: classify.SplitReport
    results_path: Path
    failed: dict = field(default_factory=dict)  # video_id -> reason
    fits: dict = field(default_factory=dict)
    cache: Cache | None = None

    @property
    def partial(self) -> bool:
        return bool(self.failed)


class Pipeline:
    def __init__(self, cfg: PipelineConfig, out_dir, cache_dir=None):
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.cache = Cache(cache_dir or cfg.resolved_cache_dir(out_dir))
        self.prep_keys = {}
        self._prep = {}
        self._projected = {}

    # -- stage keys ---------------------------------------------------------

    def _prep_key(self, path) -> str:
        c = self.cfg
        return _digest({"file": file_digest(path), "stdn": c.stdn, "mode": c.norm_mode,
                        "clip": c.clip_len_n, "stride": c.stride})

    def _extract_sig(self) -> dict:
        c = self.cfg
        return {"extractor": c.extractor, "flat": c.flat_dim, "map": c.map_shape, "spp": c.spp_levels}

    # -- per-video artifacts --------------------------------------------------

    def prepared(self, vid: str) -> dict:
        if vid not in self._prep:
            self._prep[vid] = self.cache.get_or_compute(
                "prep", self.prep_keys[vid], lambda: prepare_video(self.paths[vid], self.cfg))
        return self._prep[vid]

    def fc6(self, vid: str, stream: str) -> np.ndarray:
        key = _digest({"prep": self.prep_keys[vid], "stream": stream, **self._extract_sig()})

        def compute():
            flats, _ = extract_stream(self.prepared(vid)[stream], self.cfg)
            return {"v": fc6_pool(flats).vector}
        return self.cache.get_or_compute("fc6", key, compute)["v"]

    def projected(self, vid: str, stream: str, pca: PcaModel, pca_key: str) -> np.ndarray:
        memo = (vid, stream, pca_key)
        if memo not in self._projected:
            _, lcds = extract_stream(self.prepared(vid)[stream], self.cfg)
            self._projected[memo] = pca_transform(pca, lcds)
        return self._projected[memo]

    # -- per-split models ---------------------------------------------------

    def fit_models(self, split: str, stream: str, train_ids: list):
        c = self.cfg
        per_video = max(1, c.max_fit_descriptors // len(train_ids))
        pca_key = _digest({"train": [self.prep_keys[v] for v in train_ids], "stream": stream,
                           "d": c.pca_dim, "limit": per_video, "seed": c.seed, **self._extract_sig()})

        def compute_pca():
            parts = []
            for i, vid in enumerate(train_ids):
                _, lcds = extract_stream(self.prepared(vid)[stream], c)
                parts.append(_subsample(lcds, per_video, [c.seed, i]))
            model = fit_pca(np.concatenate(parts), c.pca_dim)
            return {"mean": _f32(model.mean), "projection": _f32(model.projection)}
        arrays = self.cache.get_or_compute("pca", pca_key, compute_pca)
        pca = PcaModel(arrays["mean"], arrays["projection"])

        cb_key = _digest({"pca": pca_key, "k": c.vlad_k, "seed": c.seed, "limit": per_video})

        def compute_cb():
            parts = [_subsample(self.projected(v, stream, pca, pca_key), per_video, [c.seed, i])
                     for i, v in enumerate(train_ids)]
            return {"centers": _f32(fit_codebook(np.concatenate(parts), c.vlad_k, c.seed).centers)}
        cb = Codebook(self.cache.get_or_compute("codebook", cb_key, compute_cb)["centers"])
        log.info("split %s/%s: pca+codebook fit on train ids %s", split, stream, train_ids)
        return pca, pca_key, cb, cb_key

    def stream_descriptor(self, vid, stream, pca, pca_key, cb, cb_key) -> np.ndarray:
        key = _digest({"prep": self.prep_keys[vid], "stream": stream, "pca": pca_key, "cb": cb_key})

        def compute():
            return {"v": vlad_encode(self.projected(vid, stream, pca, pca_key), cb).vector}
        vlad = self.cache.get_or_compute("vlad", key, compute)["v"]
        flat = VideoDescriptor(self.fc6(vid, stream), "fc6_pooled")
        return early_fuse(flat, VideoDescriptor(vlad, "vlad")).vector

    # -- classification -----------------------------------------------------

    def _svm(self, x: np.ndarray, labels: list, tag: dict):
        c = self.cfg
        key = _digest({"x": hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest(),
                       "labels": labels, "c": c.svm_c, "seed": c.seed, **tag})

        def compute():
            m = classify.train_svm(x, labels, c.svm_c, c.seed)
            return {"weights": m.weights, "biases": m.biases, "classes": np.array(m.classes)}
        a = self.cache.get_or_compute("svm", key, compute)
        return classify.LinearSvmModel(tuple(str(v) for v in a["classes"]), a["weights"], a["biases"], c.svm_c)

    def _predict(self, feats: dict, fit_ids, fit_labels, eval_ids, tag) -> classify.ProbabilityMatrix:
        model = self._svm(np.array([feats[v] for v in fit_ids]), fit_labels, tag)
        return classify.predict_proba(model, np.array([feats[v] for v in eval_ids]), eval_ids)

    def classify_split(self, split, descriptors: dict, label_of: dict, train_ids, test_ids, fits):
        c = self.cfg
        train_labels = [label_of[v] for v in train_ids]
        if c.fusion_mode == "early":
            fused = {v: np.concatenate([descriptors[s][v] for s in c.streams]) for v in train_ids + test_ids}
            fits["svm"] = list(train_ids)
            return self._predict(fused, train_ids, train_labels, test_ids, {"streams": c.streams}), None

        if len(c.streams) == 1:
            weights = classify.FusionWeights((1.0,))
        else:
            n_tune = max(1, round(c.tune_fraction * len(train_ids)))
            fit_ids, tune_ids = train_ids[:-n_tune], train_ids[-n_tune:]
            if len({label_of[v] for v in fit_ids}) < 2:
                raise DataError(f"split {split}: fusion tuning leaves fewer than 2 classes to fit")
            tune_mats = [self._predict(descriptors[s], fit_ids, [label_of[v] for v in fit_ids],
                                       tune_ids, {"stream": s, "part": "tune"}) for s in c.streams]
            weights = classify.grid_search_weights(tune_mats, [label_of[v] for v in tune_ids], c.grid_step)
            fits["fusion_fit"], fits["fusion_tune"] = list(fit_ids), list(tune_ids)
        fits["svm"] = list(train_ids)
        mats = [self._predict(descriptors[s], train_ids, train_labels, test_ids, {"stream": s})
                for s in c.streams]
        return classify.fuse_scores(mats, weights), weights

    # -- driver ---------------------------------------------------------------

    def attach(self, manifest: DatasetManifest, lenient: bool = False):
        """Prepare every video in the pool; return the surviving manifest and the failures."""
        self.paths = {e.video_id: e.path for e in manifest.entries}
        failed = {}
        self.prep_keys = {}
        for vid, path in self.paths.items():
            try:
                self.prep_keys[vid] = self._prep_key(path)
            except OSError as exc:
                failed[vid] = f"{type(exc).__name__}: {exc}"
        missing = [v for v in self.prep_keys
                   if not (self.cache.root / "prep" / f"{self.prep_keys[v]}.npz").exists()]
        jobs = [(v, self.paths[v], self.cfg) for v in missing]
        for vid, arrays, err in _pmap(_prepare_job, jobs, self.cfg.jobs):
            if err:
                failed[vid] = err
                continue
            self.cache.get_or_compute("prep", self.prep_keys[vid], lambda a=arrays: a)
        for vid, err in failed.items():
            log.error("video %s aborted: %s", vid, err)
        if failed and not lenient:
            raise DataError(f"{len(failed)} video(s) failed: " + "; ".join(f"{k}: {v}" for k, v in failed.items()))
        entries = tuple(e for e in manifest.entries if e.video_id not in failed)
        return DatasetManifest(entries, manifest.split_names), failed

    def run(self, manifest: DatasetManifest, lenient: bool = False) -> RunResult:
        c = self.cfg
        self.out_dir.mkdir(parents=True, exist_ok=True)
        manifest, failed = self.attach(manifest, lenient)
        label_of = dict(zip(manifest.video_ids, manifest.labels))
        report = classify.SplitReport({})
        all_fits = {}
        for split in manifest.split_names:
            train_ids = manifest.split_ids(split, "train")
            test_ids = manifest.split_ids(split, "test")
            if not train_ids or not test_ids:
                raise DataError(f"split {split}: empty train or test side")
            fits = all_fits.setdefault(split, {})
            descriptors = {}
            for stream in c.streams:
                pca, pk, cb, ck = self.fit_models(split, stream, train_ids)
                fits[f"{stream}_pca"] = fits[f"{stream}_codebook"] = list(train_ids)
                descriptors[stream] = {v: self.stream_descriptor(v, stream, pca, pk, cb, ck)
                                       for v in train_ids + test_ids}
                write_features(self.out_dir / f"features_{split}_{stream}.ftr",
                               [descriptors[stream][v] for v in train_ids + test_ids], "early_fused")
            self._projected.clear()
            probs, weights = self.classify_split(split, descriptors, label_of, train_ids, test_ids, fits)
            if weights is not None:
                fits["fusion_weights"] = list(weights.weights)
            report.accuracies[split] = classify.top1_accuracy(probs, [label_of[v] for v in test_ids])
            report.probabilities[split] = probs
            classify.write_probabilities(probs, self.out_dir / f"probs_{split}_{c.fusion_mode}.csv")
            log.info("split %s: top-1 %.4f", split, report.accuracies[split])

        results_path = self.out_dir / f"results_{c.fusion_mode}.csv"
        classify.write_results(report, results_path)
        (self.out_dir / f"fits_{c.fusion_mode}.json").write_text(json.dumps(all_fits, indent=1, sort_keys=True))
        return RunResult(report, results_path, failed, all_fits, self.cache)


def run_pipeline(cfg: PipelineConfig, manifest: DatasetManifest, out_dir, lenient: bool = False,
                 cache_dir=None) -> RunResult:
    return Pipeline(cfg, out_dir, cache_dir).run(manifest, lenient)
