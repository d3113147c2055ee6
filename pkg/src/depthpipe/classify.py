"""Linear one-vs-rest SVM, probability matrices, score fusion and top-1 evaluation."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from depthpipe.errors import DataError, FormatError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearSvmModel:
    classes: tuple
    weights: np.ndarray  # (K, D)
    biases: np.ndarray  # (K,)
    c_param: float = 1.0
    # per-class dual objective after each epoch
    history: tuple = field(default=(), compare=False, repr=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def margins(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise ValueError(f"feature dim {x.shape[1]} != model dim {self.dim}")
        return x @ self.weights.T + self.biases


def _binary_dual_cd(x: np.ndarray, y: np.ndarray, c: float, rng: np.random.Generator,
                    max_epochs: int, tol: float):
    """L2-regularised hinge loss via dual coordinate descent on bias-augmented inputs.

    Returns (w, b, dual objective per epoch). The dual objective is
    0.5 * ||w||^2 - sum(alpha); each coordinate step minimises it exactly.
    """
    n, dim = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    qii = np.einsum("ij,ij->i", xa, xa)
    alpha = np.zeros(n)
    w = np.zeros(dim + 1)
    history = []
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            g = y[i] * (w @ xa[i]) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == c:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                new = min(max(a - g / qii[i], 0.0), c)
                w += (new - a) * y[i] * xa[i]
                alpha[i] = new
        ww = w @ w
        dual = 0.5 * ww - alpha.sum()
        history.append(dual)
        primal = 0.5 * ww + c * np.maximum(0.0, 1.0 - y * (xa @ w)).sum()
        if primal + dual <= tol * max(abs(primal), 1e-12):
            break
    return w[:-1].copy(), float(w[-1]), history


def train_svm(features, labels, c_param: float = 1.0, rng_seed: int = 0,
              max_epochs: int = 1000, tol: float = 1e-4) -> LinearSvmModel:
    x = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise ValueError("features must be (n, D) with one label per row")
    if c_param <= 0:
        raise ValueError("c_param must be positive")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ValueError("train_svm needs at least two classes")
    lab = np.array([classes.index(v) for v in labels])
    weights, biases, history = [], [], []
    for k in range(len(classes)):
        y = np.where(lab == k, 1.0, -1.0)
        rng = np.random.default_rng([rng_seed, k])
        w, b, h = _binary_dual_cd(x, y, c_param, rng, max_epochs, tol)
        weights.append(w)
        biases.append(b)
        history.append(tuple(h))
    return LinearSvmModel(classes, np.array(weights), np.array(biases), c_param, tuple(history))


def save_svm(model: LinearSvmModel, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, weights=model.weights, biases=model.biases,
                 meta=np.array(json.dumps({"classes": list(model.classes), "c": model.c_param})))


def load_svm(path) -> LinearSvmModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        return LinearSvmModel(tuple(meta["classes"]), z["weights"].copy(), z["biases"].copy(), meta["c"])


# ---------------------------------------------------------------------------
# probabilities


@dataclass(frozen=True)
class ProbabilityMatrix:
    video_ids: tuple
    classes: tuple
    rows: np.ndarray  # (n_videos, n_classes)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "video_ids", tuple(self.video_ids))
        object.__setattr__(self, "classes", tuple(self.classes))
        if rows.shape != (len(self.video_ids), len(self.classes)):
            raise ValueError(f"rows shape {rows.shape} does not match ids/classes")
        if rows.size and (rows.min() < -1e-9 or rows.max() > 1 + 1e-9
                          or np.abs(rows.sum(1) - 1).max() > 1e-6):
            raise ValueError("probability rows must lie on the simplex")
        object.__setattr__(self, "rows", rows)

    def predictions(self) -> list:
        return [self.classes[i] for i in np.argmax(self.rows, axis=1)]

    def subset(self, video_ids) -> "ProbabilityMatrix":
        index = {v: i for i, v in enumerate(self.video_ids)}
        sel = [index[v] for v in video_ids]
        return ProbabilityMatrix(tuple(video_ids), self.classes, self.rows[sel])


def softmax_rows(margins: np.ndarray) -> np.ndarray:
    z = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(model: LinearSvmModel, features, video_ids=None) -> ProbabilityMatrix:
    m = model.margins(features)
    if video_ids is None:
        video_ids = [str(i) for i in range(m.shape[0])]
    return ProbabilityMatrix(tuple(video_ids), model.classes, softmax_rows(m))


# ---------------------------------------------------------------------------
# fusion


@dataclass(frozen=True)
class FusionWeights:
    weights: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if not w or any(v < 0 or v > 1 for v in w) or abs(sum(w) - 1) > 1e-9:
            raise ValueError(f"fusion weights must lie in [0,1] and sum to 1, got {w}")
        object.__setattr__(self, "weights", w)


def check_aligned(mats) -> None:
    ref = mats[0]
    for m in mats[1:]:
        if m.classes != ref.classes:
            raise ValueError(f"class order mismatch: {ref.classes} vs {m.classes}")
        if m.video_ids != ref.video_ids:
            for i, (a, b) in enumerate(itertools.zip_longest(ref.video_ids, m.video_ids)):
                if a != b:
                    raise ValueError(f"video_id mismatch at row {i}: {a!r} vs {b!r}")


def fuse_scores(mats, w) -> ProbabilityMatrix:
    mats = list(mats)
    if not isinstance(w, FusionWeights):
        w = FusionWeights(tuple(w))
    if len(mats) != len(w.weights):
        raise ValueError(f"{len(mats)} matrices but {len(w.weights)} weights")
    check_aligned(mats)
    rows = sum(wi * m.rows for wi, m in zip(w.weights, mats))
    return ProbabilityMatrix(mats[0].video_ids, mats[0].classes, rows)


def _label_index(classes, labels) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[v] for v in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not among classes {list(classes)}") from None


def top1_correct(mat: ProbabilityMatrix, labels) -> int:
    labels = list(labels)
    if len(labels) != len(mat.video_ids):
        raise ValueError("labels must align with video_ids")
    truth = _label_index(mat.classes, labels)
    return int((np.argmax(mat.rows, axis=1) == truth).sum())


def top1_accuracy(mat: ProbabilityMatrix, labels) -> float:
    n = len(mat.video_ids)
    if n == 0:
        raise ValueError("no videos to score")
    return top1_correct(mat, labels) / n


def simplex_grid(parts: int, steps: int):
    """Integer compositions of `steps` into `parts` parts, lexicographically ascending."""
    if parts == 1:
        yield (steps,)
        return
    for first in range(steps + 1):
        for rest in simplex_grid(parts - 1, steps - first):
            yield (first,) + rest


def grid_search_weights(mats, labels, step: float = 0.05) -> FusionWeights:
    mats = list(mats)
    if len(mats) not in (2, 3):
        raise ValueError("grid search supports 2 or 3 matrices")
    steps = round(1.0 / step)
    if steps < 1 or abs(steps * step - 1.0) > 1e-9:
        raise ValueError(f"step {step} does not divide 1")
    check_aligned(mats)
    truth = _label_index(mats[0].classes, labels)
    best, best_correct = None, -1
    for point in simplex_grid(len(mats), steps):
        rows = sum((p / steps) * m.rows for p, m in zip(point, mats))
        correct = int((np.argmax(rows, axis=1) == truth).sum())
        if correct > best_correct:
            best, best_correct = point, correct
    return FusionWeights(tuple(p / steps for p in best))


# ---------------------------------------------------------------------------
# file formats


def write_probabilities(mat: ProbabilityMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", *mat.classes])
        for vid, row in zip(mat.video_ids, mat.rows):
            writer.writerow([vid, *(repr(float(v)) for v in row)])


def read_probabilities(path) -> ProbabilityMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "video_id" or len(header) < 2:
            raise FormatError(f"{path}: bad probability header")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} cells")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    rows = np.array(rows, dtype=np.float64).reshape(len(ids), len(header) - 1)
    return ProbabilityMatrix(tuple(ids), tuple(header[1:]), rows)


# ---------------------------------------------------------------------------
# split protocol


@dataclass
class SplitReport:
    accuracies: dict  # split name -> accuracy
    probabilities: dict = field(default_factory=dict)  # split name -> test ProbabilityMatrix

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.accuracies.values())))


def split_evaluate(manifest, features: dict, splits=None, c_param: float = 1.0,
                   rng_seed: int = 0) -> SplitReport:
    """Train on each split's train side, score top-1 on its test side."""
    splits = list(splits or manifest.split_names)
    for e in manifest.entries:
        if e.video_id not in features:
            raise DataError(f"no descriptor for video {e.video_id!r}")
    label_of = {e.video_id: e.label for e in manifest.entries}
    report = SplitReport({})
    for split in splits:
        train_ids = manifest.split_ids(split, "train")
        test_ids = manifest.split_ids(split, "test")
        log.info("split %s: svm fit on train ids %s", split, train_ids)
        model = train_svm([_vec(features[v]) for v in train_ids], [label_of[v] for v in train_ids],
                          c_param, rng_seed)
        probs = predict_proba(model, [_vec(features[v]) for v in test_ids], test_ids)
        report.accuracies[split] = top1_accuracy(probs, [label_of[v] for v in test_ids])
        report.probabilities[split] = probs
    return report


def _vec(d):
    return getattr(d, "vector", d)


def write_results(report: SplitReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["split", "accuracy"])
        for split, acc in report.accuracies.items():
            writer.writerow([split, f"{acc:.6f}"])
        writer.writerow(["mean", f"{report.mean:.6f}"])


def read_results(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["split", "accuracy"]:
        raise FormatError(f"{path}: bad results header")
    return {name: float(v) for name, v in rows[1:]}
