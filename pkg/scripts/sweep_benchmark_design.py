#!/usr/bin/env python3
"""Sweep benchmark generator settings and report stream accuracies.

The benchmark is meant to be hard for single frames and easy for motion. This
script checks that across generator settings and seeds, e.g.

    python scripts/sweep_benchmark_design.py --set tilt=0.0 --set tilt=0.8 --seeds 7 1 2 3
    python scripts/sweep_benchmark_design.py --set centered=False amplitude=0.25

Each `--set` takes space-separated BenchmarkSpec overrides and forms one row
group. Values are parsed as Python literals.
"""

import argparse
import ast
import shutil
import tempfile
from pathlib import Path

from depthpipe.benchmark import BenchmarkSpec, make_benchmark
from depthpipe.config import PipelineConfig
from depthpipe.depth_io import read_manifest
from depthpipe.pipeline import run_pipeline


def parse_setting(tokens):
    kw = {}
    for tok in tokens:
        key, _, raw = tok.partition("=")
        if key not in BenchmarkSpec.__dataclass_fields__:
            raise SystemExit(f"unknown BenchmarkSpec field {key!r}")
        kw[key] = ast.literal_eval(raw)
    return kw


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--set", dest="settings", nargs="*", action="append", default=None)
    ap.add_argument("--seeds", type=int, nargs="+", default=[7, 1, 2, 3])
    ap.add_argument("--videos-per-class", type=int, default=50)
    args = ap.parse_args()

    for tokens in args.settings or [[]]:
        kw = parse_setting(tokens)
        for seed in args.seeds:
            root = Path(tempfile.mkdtemp(prefix="sweep_"))
            try:
                make_benchmark(root / "data", args.videos_per_class, seed, BenchmarkSpec(**kw))
                manifest = read_manifest(root / "data" / "manifest.csv")
                acc = {}
                for name, streams in (("temporal", ("temporal",)), ("spatial", ("spatial",)),
                                      ("early", ("spatial", "temporal"))):
                    res = run_pipeline(PipelineConfig(streams=streams), manifest, root / name,
                                       cache_dir=root / "cache")
                    acc[name] = res.report.accuracies["split1"]
            finally:
                shutil.rmtree(root, ignore_errors=True)
            print(kw or "defaults", f"seed={seed}", " | ".join(f"{k} {v:.2f}" for k, v in acc.items()), flush=True)


if __name__ == "__main__":
    main()
