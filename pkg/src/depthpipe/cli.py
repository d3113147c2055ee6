"""Command-line entry point: `depthpipe <subcommand> ...`.

Exit codes are 0 on success, 2 for configuration errors, 3 for data errors and
4 when a lenient run finished with some videos dropped.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from depthpipe import classify
from depthpipe.benchmark import make_benchmark
from depthpipe.config import load_config, parse_overrides
from depthpipe.depth_io import read_manifest, read_sequence, write_sequence
from depthpipe.errors import ConfigError, DataError, DepthpipeError
from depthpipe.features import (
    load_codebook,
    load_pca,
    read_features,
    save_codebook,
    save_pca,
    write_features,
)
from depthpipe.motion import DEFAULT_CLIP_LEN, export_png, mdmm_stack, mdmm_tiling
from depthpipe.normalize import StdnConfig, intra_frame_normalize, stdn
from depthpipe.pipeline import Pipeline, _digest

EXIT_PARTIAL = 4

log = logging.getLogger("depthpipe")


def _split_arg(p):
    p.add_argument("--split", default=None, help="split column (default: the first one)")


def _config_args(p):
    p.add_argument("--config", type=Path, default=None, help="key=value config file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="depthpipe", description="Depth-based action recognition pipeline.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="normalize a depth sequence")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--mode", choices=("stdn", "intra"), default="stdn")
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--bands", type=int, default=3)
    p.add_argument("--percentile", type=float, default=95.0)

    p = sub.add_parser("mdmm", help="compute multi-scale depth motion maps")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path, help=".dseq file holding one map per clip")
    p.add_argument("--clip-len", type=int, default=DEFAULT_CLIP_LEN)
    p.add_argument("--png-dir", type=Path, default=None, help="also export each map as an 8-bit PNG")

    p = sub.add_parser("encode", help="encode one stream of a manifest into video descriptors")
    p.add_argument("manifest", type=Path)
    p.add_argument("--stream", choices=("spatial", "temporal"), required=True)
    p.add_argument("--out", type=Path, required=True, help="output .ftr (rows in manifest order)")
    p.add_argument("--pca", type=Path, default=None, help="PCA model to load, or to write with --fit")
    p.add_argument("--codebook", type=Path, default=None, help="codebook to load, or to write with --fit")
    p.add_argument("--fit", action="store_true", help="fit PCA and codebook on the split's train videos")
    _split_arg(p)
    _config_args(p)

    p = sub.add_parser("train", help="train a linear SVM on the train side of a split")
    p.add_argument("features", type=Path)
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    _split_arg(p)

    p = sub.add_parser("predict", help="write class probabilities for the test side of a split")
    p.add_argument("model", type=Path)
    p.add_argument("features", type=Path)
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _split_arg(p)

    p = sub.add_parser("fuse", help="weighted average of probability files")
    p.add_argument("inputs", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--weights", help="comma-separated weights summing to 1")
    g.add_argument("--tune-manifest", type=Path, help="grid-search weights against these labels")
    p.add_argument("--grid-step", type=float, default=0.05)

    p = sub.add_parser("evaluate", help="top-1 accuracy of a probability file")
    p.add_argument("probs", type=Path)
    p.add_argument("manifest", type=Path)

    p = sub.add_parser("run", help="full pipeline from a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--lenient", action="store_true", help="drop failing videos instead of aborting")
    p.add_argument("--jobs", type=int, default=None)
    _config_args(p)

    p = sub.add_parser("bench-make", help="generate the synthetic static/oscillate benchmark")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--videos-per-class", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    return ap


# ---------------------------------------------------------------------------


def _split(manifest, name):
    if name is None:
        return manifest.split_names[0]
    if name not in manifest.split_names:
        raise DataError(f"unknown split {name!r}; manifest has {list(manifest.split_names)}")
    return name


def _rows(manifest, features_path):
    x, _ = read_features(features_path)
    if x.shape[0] != len(manifest):
        raise DataError(f"{features_path}: {x.shape[0]} rows for {len(manifest)} manifest entries")
    return dict(zip(manifest.video_ids, x))


def cmd_normalize(args, extra):
    seq = read_sequence(args.input)
    if args.mode == "stdn":
        try:
            cfg = StdnConfig(args.window, args.bands, args.percentile)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out = stdn(seq, cfg)
    else:
        out = intra_frame_normalize(seq)
    write_sequence(out, args.output)


def cmd_mdmm(args, extra):
    if args.clip_len < 2:
        raise ConfigError("--clip-len must be at least 2")
    seq = read_sequence(args.input)
    if len(seq) < 2:
        raise DataError(f"{args.input}: need at least 2 frames")
    maps = mdmm_tiling(seq, args.clip_len)
    write_sequence(mdmm_stack(maps, seq.video_id), args.output)
    if args.png_dir:
        args.png_dir.mkdir(parents=True, exist_ok=True)
        for m in maps:
            export_png(m, args.png_dir / f"mdmm_{m.t_start:05d}.png")


def cmd_encode(args, extra):
    cfg = load_config(args.config, parse_overrides(extra))
    manifest = read_manifest(args.manifest)
    split = _split(manifest, args.split)
    pipe = Pipeline(cfg, args.out.parent)
    manifest, _ = pipe.attach(manifest)
    if args.fit:
        pca, pk, cb, ck = pipe.fit_models(split, args.stream, manifest.split_ids(split, "train"))
        if args.pca:
            save_pca(pca, args.pca)
        if args.codebook:
            save_codebook(cb, args.codebook)
    else:
        if not (args.pca and args.codebook):
            raise ConfigError("encode needs --pca and --codebook, or --fit")
        pca, cb = load_pca(args.pca), load_codebook(args.codebook)
        pk = _digest({"mean": pca.mean.tolist(), "proj": pca.projection.tolist()})
        ck = _digest({"centers": cb.centers.tolist()})
        if pca.projection.shape[0] != cb.dim:
            raise ConfigError(f"PCA output dim {pca.projection.shape[0]} != codebook dim {cb.dim}")
    vectors = [pipe.stream_descriptor(v, args.stream, pca, pk, cb, ck) for v in manifest.video_ids]
    write_features(args.out, vectors, "early_fused")


def cmd_train(args, extra):
    manifest = read_manifest(args.manifest, check_paths=False)
    split = _split(manifest, args.split)
    feats = _rows(manifest, args.features)
    label_of = dict(zip(manifest.video_ids, manifest.labels))
    ids = manifest.split_ids(split, "train")
    try:
        model = classify.train_svm([feats[v] for v in ids], [label_of[v] for v in ids], args.c, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    classify.save_svm(model, args.out)


def cmd_predict(args, extra):
    manifest = read_manifest(args.manifest, check_paths=False)
    split = _split(manifest, args.split)
    feats = _rows(manifest, args.features)
    ids = manifest.split_ids(split, "test")
    model = classify.load_svm(args.model)
    try:
        mat = classify.predict_proba(model, np.array([feats[v] for v in ids]), ids)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    classify.write_probabilities(mat, args.out)


def cmd_fuse(args, extra):
    mats = [classify.read_probabilities(p) for p in args.inputs]
    try:
        if args.weights:
            weights = classify.FusionWeights(tuple(float(w) for w in args.weights.split(",")))
        else:
            manifest = read_manifest(args.tune_manifest, check_paths=False)
            label_of = dict(zip(manifest.video_ids, manifest.labels))
            weights = classify.grid_search_weights(mats, [label_of[v] for v in mats[0].video_ids],
                                                   args.grid_step)
            print("weights", ",".join(f"{w:g}" for w in weights.weights))
    except KeyError as exc:
        raise DataError(f"video {exc} missing from the tuning manifest") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        fused = classify.fuse_scores(mats, weights.weights)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    classify.write_probabilities(fused, args.out)


def cmd_evaluate(args, extra):
    mat = classify.read_probabilities(args.probs)
    manifest = read_manifest(args.manifest, check_paths=False)
    label_of = dict(zip(manifest.video_ids, manifest.labels))
    missing = [v for v in mat.video_ids if v not in label_of]
    if missing:
        raise DataError(f"videos not in manifest: {missing[:5]}")
    try:
        acc = classify.top1_accuracy(mat, [label_of[v] for v in mat.video_ids])
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(f"top1 {acc:.6f}")


def cmd_run(args, extra):
    overrides = parse_overrides(extra)
    if args.jobs is not None:
        overrides["pipeline.jobs"] = str(args.jobs)
    cfg = load_config(args.config, overrides)
    manifest = read_manifest(args.manifest, check_paths=False)
    result = Pipeline(cfg, args.out_dir).run(manifest, lenient=args.lenient)
    for split, acc in result.report.accuracies.items():
        print(f"{split} {acc:.6f}")
    print(f"mean {result.report.mean:.6f}")
    print(f"results {result.results_path}")
    if result.partial:
        print(f"partial: {len(result.failed)} video(s) dropped", file=sys.stderr)
        (args.out_dir / "failed.json").write_text(json.dumps(result.failed, indent=1, sort_keys=True))
        return EXIT_PARTIAL
    return 0


def cmd_bench_make(args, extra):
    if args.videos_per_class < 1:
        raise ConfigError("--videos-per-class must be at least 1")
    manifest = make_benchmark(args.out_dir, args.videos_per_class, args.seed)
    print(f"{len(manifest)} videos -> {args.out_dir / 'manifest.csv'}")


COMMANDS = {
    "normalize": cmd_normalize, "mdmm": cmd_mdmm, "encode": cmd_encode, "train": cmd_train,
    "predict": cmd_predict, "fuse": cmd_fuse, "evaluate": cmd_evaluate, "run": cmd_run,
    "bench-make": cmd_bench_make,
}
TAKES_OVERRIDES = {"encode", "run"}


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.command not in TAKES_OVERRIDES:
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, extra) or 0
    except DepthpipeError as exc:
        print(f"depthpipe: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"depthpipe: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
