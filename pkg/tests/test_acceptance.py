"""Acceptance gate: one PASS/FAIL line per primary criterion.

Run with `pytest tests/test_acceptance.py -v` or `python tests/test_acceptance.py`.
Each check records its verdict and measured numbers, which are listed in an
"acceptance criteria" section at the end of the run, then asserts, so a
failure also fails the test run.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from depthpipe import classify
from depthpipe.benchmark import make_benchmark
from depthpipe.cli import main as cli_main
from depthpipe.config import PipelineConfig
from depthpipe.depth_io import DepthSequence, read_manifest, read_sequence, write_sequence
from depthpipe.features import (
    Codebook,
    PcaModel,
    fit_pca,
    load_codebook,
    load_pca,
    pca_reconstruct,
    pca_transform,
    read_features,
    save_codebook,
    save_pca,
    vlad_encode,
    write_features,
)
from depthpipe.motion import Clip, abs_diff_sequence, mdmm
from depthpipe.normalize import StdnConfig, band_partition, nearest_rank_percentile, stdn
from depthpipe.pipeline import run_pipeline

from conftest import ACCEPTANCE_LINES


def verdict(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def rel_close(a, b, rtol) -> bool:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return bool(np.all(np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b))))


def stdn_corpus(n=100, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        t, h, w = int(rng.integers(1, 48)), int(rng.integers(3, 40)), int(rng.integers(1, 40))
        out.append(DepthSequence(rng.uniform(0.2, 10.0, size=(t, h, w)).astype(np.float32), f"s{i}"))
    return out


# ---------------------------------------------------------------------------
# normalization


def test_stdn_percentile_contract():
    cfg = StdnConfig()
    corpus = stdn_corpus()
    t0 = time.perf_counter()
    outs = [stdn(s, cfg) for s in corpus]
    elapsed = time.perf_counter() - t0
    worst, checked = 0.0, 0
    for seq, out in zip(corpus, outs):
        for r0, r1 in band_partition(seq.height, cfg.bands):
            for w0 in range(0, len(seq), cfg.window_n):
                w1 = min(w0 + cfg.window_n, len(seq))
                ref = nearest_rank_percentile(seq.frames[w0:w1, r0:r1], cfg.percentile_p)
                for t in range(w0, w1):
                    got = nearest_rank_percentile(out.frames[t, r0:r1], cfg.percentile_p)
                    worst = max(worst, abs(got - ref) / ref)
                    checked += 1
    verdict("STDN percentile contract", worst <= 1e-5 and elapsed < 10,
            f"{checked} frame-bands, max rel dev {worst:.2e}, stdn time {elapsed:.2f}s")


def test_stdn_idempotence_and_scale():
    cfg = StdnConfig()
    ok_idem = ok_scale = True
    rng = np.random.default_rng(5)
    for seq in stdn_corpus():
        once = stdn(seq, cfg)
        ok_idem &= rel_close(stdn(once, cfg).frames, once.frames, 1e-5)
        a = float(rng.uniform(0.1, 20.0))
        scaled = seq.with_frames(seq.frames.astype(np.float64) * a)
        ok_scale &= rel_close(stdn(scaled, cfg).frames, once.frames.astype(np.float64) * a, 1e-5)
    verdict("STDN idempotence and scale covariance", ok_idem and ok_scale,
            f"idempotent={ok_idem} scale-covariant={ok_scale} on 100 sequences")


# ---------------------------------------------------------------------------
# motion maps


def test_mdmm_properties():
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    fails = []
    for i in range(100):
        n, h, w = int(rng.integers(2, 16)), int(rng.integers(1, 24)), int(rng.integers(1, 24))
        # dyadic values keep every sum exact, so exact invariances can be checked with ==
        frames = rng.integers(0, 512, size=(n, h, w)) / 8.0
        seq = DepthSequence(frames)
        e = mdmm(Clip(seq, 0, n)).energy
        if e.min() < 0:
            fails.append((i, "negative"))
        static = DepthSequence(np.broadcast_to(frames[:1], frames.shape))
        if mdmm(Clip(static, 0, n)).energy.any():
            fails.append((i, "static"))
        offset = float(rng.integers(1, 64)) / 4.0
        if not np.array_equal(mdmm(Clip(DepthSequence(frames + offset), 0, n)).energy, e):
            fails.append((i, "offset"))
        if not np.array_equal(mdmm(Clip(DepthSequence(frames[::-1]), 0, n)).energy, e):
            fails.append((i, "reversal"))
        # 14-bit values times an 8-bit factor stay exact in float32, so the scaled input is a*x itself
        real = DepthSequence(rng.integers(1, 10240, size=(n, h, w)) / 1024.0)
        a = float(rng.integers(1, 256)) / 16.0
        base = mdmm(Clip(real, 0, n)).energy
        if not rel_close(mdmm(Clip(real.with_frames(real.frames.astype(np.float64) * a), 0, n)).energy,
                         base * a, 1e-6):
            fails.append((i, "scale"))
        oracle = abs_diff_sequence(real).frames.astype(np.float64).sum(axis=0)
        if not np.allclose(base, oracle, rtol=1e-6, atol=0):
            fails.append((i, "abs-diff oracle"))
    elapsed = time.perf_counter() - t0
    verdict("MDMM properties", not fails and elapsed < 10,
            f"100 clips, failures {fails[:5]}, time {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# encoding


def brute_vlad(x, centers):
    """Straight loops: nearest centre by squared distance, first index on ties."""
    k, d = centers.shape
    blocks = [[0.0] * d for _ in range(k)]
    for row in x:
        dists = [sum((float(row[j]) - float(c[j])) ** 2 for j in range(d)) for c in centers]
        best = dists.index(min(dists))
        for j in range(d):
            blocks[best][j] += float(row[j]) - float(centers[best][j])
    out = []
    for b in blocks:
        norm = math.sqrt(sum(v * v for v in b))
        out.extend([v / norm for v in b] if norm > 0 else b)
    total = math.sqrt(sum(v * v for v in out))
    return np.array([v / total for v in out]) if total > 0 else np.array(out)


def test_vlad_oracle_and_dimension():
    rng = np.random.default_rng(11)
    worst, perm_exact = 0.0, True
    for _ in range(50):
        k, d, n = int(rng.integers(1, 9)), int(rng.integers(1, 9)), int(rng.integers(1, 60))
        centers = rng.normal(size=(k, d))
        x = rng.normal(size=(n, d))
        if rng.random() < 0.3:
            x[: n // 2] = centers[rng.integers(0, k, size=n // 2)]  # rows sitting on centres
        got = vlad_encode(x, Codebook(centers)).vector
        worst = max(worst, float(np.abs(got - brute_vlad(x, centers)).max()))
        shuffled = vlad_encode(x[rng.permutation(n)], Codebook(centers)).vector
        perm_exact &= np.array_equal(got, shuffled)
    cfg = PipelineConfig()
    big = vlad_encode(rng.normal(size=(300, cfg.pca_dim)), Codebook(rng.normal(size=(cfg.vlad_k, cfg.pca_dim))))
    dim_ok = big.dim == 16384 == cfg.vlad_k * cfg.pca_dim and cfg.vlad_k == 256
    verdict("VLAD oracle equivalence", worst < 1e-6 and perm_exact and dim_ok,
            f"max abs dev {worst:.2e}, permutation exact={perm_exact}, dim {big.dim} (K={cfg.vlad_k}, d={cfg.pca_dim})")


def test_pca_properties():
    rng = np.random.default_rng(13)
    worst_orth = worst_rec = 0.0
    ordered = True
    for _ in range(20):
        c = int(rng.integers(4, 40))
        d = int(rng.integers(1, c))
        n = int(rng.integers(d + 2, 300))
        basis = np.linalg.qr(rng.normal(size=(c, d)))[0].T
        x = rng.normal(size=(n, d)) * rng.uniform(0.5, 5, size=d) @ basis + rng.normal(size=c)
        model = fit_pca(x, d)
        worst_orth = max(worst_orth, float(np.abs(model.projection @ model.projection.T - np.eye(d)).max()))
        worst_rec = max(worst_rec, float(np.abs(pca_reconstruct(model, pca_transform(model, x)) - x).max()))
        full = fit_pca(rng.normal(size=(n, c)) * rng.uniform(0.1, 3, size=c), min(c, n - 1))
        ordered &= bool(np.all(np.diff(full.variances) <= 0))
    verdict("PCA properties", worst_orth <= 1e-6 and worst_rec < 1e-8 and ordered,
            f"orthonormality dev {worst_orth:.2e}, subspace recovery err {worst_rec:.2e}, ordering ok={ordered}")


# ---------------------------------------------------------------------------
# classification and fusion


def test_svm_training():
    rng = np.random.default_rng(17)
    axes = np.linalg.qr(rng.normal(size=(20, 3)))[0].T  # orthonormal class directions
    y = np.arange(200) % 3
    x = 4.0 * axes[y] + rng.normal(scale=0.5, size=(200, 20))
    labels = [f"c{i}" for i in y]
    # certify one-vs-rest separability: along each class axis, the class sits strictly apart
    proj = x @ axes.T
    assert all(proj[y == k, k].min() > proj[y != k, k].max() for k in range(3))
    t0 = time.perf_counter()
    model = classify.train_svm(x, labels, c_param=1.0, rng_seed=0)
    elapsed = time.perf_counter() - t0
    acc = classify.top1_accuracy(classify.predict_proba(model, x), labels)
    monotone = all(bool(np.all(np.diff(h) <= 1e-12 * max(1.0, np.abs(h).max()))) for h in map(np.array, model.history))
    epochs = [len(h) for h in model.history]
    verdict("SVM training", acc >= 0.99 and elapsed < 10 and monotone,
            f"{len(labels)} samples, train acc {acc:.3f}, time {elapsed:.2f}s, epochs {epochs}, monotone={monotone}")


def _pm(rows, prefix="v"):
    return classify.ProbabilityMatrix(tuple(f"{prefix}{i}" for i in range(len(rows))),
                                      tuple(f"k{j}" for j in range(rows.shape[1])), rows)


def test_fusion_algebra():
    rng = np.random.default_rng(19)
    a = _pm(rng.dirichlet(np.ones(3), size=10))
    b = _pm(rng.dirichlet(np.ones(3), size=10))
    exact = (np.array_equal(classify.fuse_scores([a, b], (1.0, 0.0)).rows, a.rows)
             and np.array_equal(classify.fuse_scores([a, b], (0.0, 1.0)).rows, b.rows)
             and np.array_equal(classify.fuse_scores([a, a], (0.5, 0.5)).rows, a.rows))
    lo, hi = np.minimum(a.rows, b.rows), np.maximum(a.rows, b.rows)
    mid = classify.fuse_scores([a, b], (0.3, 0.7)).rows
    convex = bool(np.all(mid >= lo - 1e-15) and np.all(mid <= hi + 1e-15))
    never_worse, instances = True, 0
    for i in range(20):
        n, k = int(rng.integers(5, 40)), int(rng.integers(2, 5))
        mats = [_pm(rng.dirichlet(np.ones(k), size=n)) for _ in range(2 + i % 2)]
        labels = [f"k{j}" for j in rng.integers(0, k, size=n)]
        best = classify.top1_accuracy(classify.fuse_scores(mats, classify.grid_search_weights(mats, labels)), labels)
        never_worse &= all(best >= classify.top1_accuracy(m, labels) for m in mats)
        instances += 1
    verdict("Fusion algebra", exact and convex and never_worse,
            f"identity/fixed-point exact={exact}, convex={convex}, grid >= corners on {instances} instances={never_worse}")


# ---------------------------------------------------------------------------
# end-to-end


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_bench")
    make_benchmark(root, videos_per_class=50, rng_seed=7)
    return root


def test_synthetic_benchmark(bench):
    manifest = read_manifest(bench / "manifest.csv")
    cache = bench / "cache"
    t0 = time.perf_counter()
    acc = {}
    for name, streams in (("temporal", ("temporal",)), ("spatial", ("spatial",)),
                          ("early", ("spatial", "temporal"))):
        res = run_pipeline(PipelineConfig(streams=streams), manifest, bench / name, cache_dir=cache)
        acc[name] = res.report.accuracies["split1"]
    elapsed = time.perf_counter() - t0
    ok = (acc["temporal"] >= 0.95 and acc["spatial"] <= 0.70
          and acc["early"] >= acc["temporal"] - 0.05 and elapsed < 180)
    verdict("Synthetic benchmark", ok,
            f"temporal {acc['temporal']:.2f} (>=0.95), spatial {acc['spatial']:.2f} (<=0.70), "
            f"early {acc['early']:.2f} (>= temporal-0.05), total {elapsed:.1f}s (<180s)")


def test_format_round_trips(tmp_path):
    rng = np.random.default_rng(23)
    bad = []
    for i in range(50):
        f32 = lambda *shape: rng.normal(size=shape).astype(np.float32)  # noqa: E731
        t, h, w = (int(v) for v in rng.integers(1, 12, size=3))
        seq = DepthSequence(np.abs(f32(t, h, w)), f"s{i}")
        write_sequence(seq, tmp_path / "a.dseq")
        if not np.array_equal(read_sequence(tmp_path / "a.dseq").frames, seq.frames):
            bad.append((i, "dseq"))

        feats = f32(int(rng.integers(1, 9)), int(rng.integers(1, 300)))
        write_features(tmp_path / "a.ftr", feats, "vlad")
        back, kind = read_features(tmp_path / "a.ftr")
        if kind != "vlad" or not np.array_equal(back, feats):
            bad.append((i, "ftr"))

        c = int(rng.integers(2, 20))
        d = int(rng.integers(1, c + 1))
        pca = PcaModel(f32(c).astype(np.float64), f32(d, c).astype(np.float64))
        save_pca(pca, tmp_path / "a.pcam")
        p2 = load_pca(tmp_path / "a.pcam")
        cb = Codebook(f32(int(rng.integers(1, 20)), d).astype(np.float64))
        save_codebook(cb, tmp_path / "a.cdbk")
        if not (np.array_equal(p2.mean, pca.mean) and np.array_equal(p2.projection, pca.projection)
                and np.array_equal(load_codebook(tmp_path / "a.cdbk").centers, cb.centers)):
            bad.append((i, "model"))

        k = int(rng.integers(2, 5))
        svm = classify.LinearSvmModel(tuple(f"c{j}" for j in range(k)), rng.normal(size=(k, 7)), rng.normal(size=k))
        classify.save_svm(svm, tmp_path / "a.npz")
        s2 = classify.load_svm(tmp_path / "a.npz")
        if not (s2.classes == svm.classes and np.array_equal(s2.weights, svm.weights)
                and np.array_equal(s2.biases, svm.biases)):
            bad.append((i, "svm"))

        mat = _pm(rng.dirichlet(np.ones(k), size=int(rng.integers(1, 20))))
        classify.write_probabilities(mat, tmp_path / "a.csv")
        m2 = classify.read_probabilities(tmp_path / "a.csv")
        if not (m2.video_ids == mat.video_ids and m2.classes == mat.classes and np.array_equal(m2.rows, mat.rows)):
            bad.append((i, "probabilities"))
    verdict("Format round-trips", not bad, f"50 instances x 5 formats, mismatches {bad[:5]}")


def test_run_determinism(bench, tmp_path, capsys):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        rc = cli_main(["run", "--manifest", str(bench / "manifest.csv"), "--out-dir", str(out),
                       "--pipeline.cache_dir", str(tmp_path / f"cache_{tag}")])
        assert rc == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    same = outs[0] == outs[1] and "results_early.csv" in outs[0]
    verdict("Determinism", same, f"two cold `run` invocations, CSVs compared: {sorted(outs[0])}, identical={same}")


if __name__ == "__main__":
    # a fresh interpreter, so pytest sees no modules imported ahead of it
    sys.exit(subprocess.call([sys.executable, "-m", "pytest", __file__, "-q", "-p", "no:cacheprovider", *sys.argv[1:]]))
