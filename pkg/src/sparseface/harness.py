"""Experiment runner: configs, dataset splits, pipelines, metrics, reports.

Everything random flows through the single config seed, and emitted CSV
files are byte-deterministic for a fixed config. Wall-clock timings live in
the report object only; they are printed, never written into CSVs.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import container
from .classify import (
    SoftScores,
    block_decision,
    block_layout,
    majority_vote,
    ml_fuse,
    src_global,
)
from .dictionary import (
    COMPLEMENT_LABEL,
    ERROR_CLASS,
    LabeledTrainingSet,
    LocalDictionary,
    SearchWindow,
    build_binary_dictionary,
    build_global_dictionary,
    build_local_dictionary,
    with_error_atoms,
)
from .graphs import ThickenedGraphPair, boost_thicken, llr, pair_from_entries, pair_to_entries
from .imaging import BlockSpec, GrayImage, corrupt_pixels, downsample, load_pgm, warp
from .meta import MetaSample, fit_meta, meta_classify
from .solver import class_residuals, omp, sci

SWEEP_COUNTS = (3, 5, 8, 12, 20, 30, 42)

PIPELINES = ("src", "voting", "lhml", "lsgm", "meta")


@dataclass
class ExperimentConfig:
    """Flat experiment description; every knob has a workable default."""

    dataset_root: str = ""
    k_classes: int = 0  # 0 = infer from the dataset
    train_per_class: int = 15
    test_per_class: int = 0  # 0 = all remaining samples
    seed: int = 0
    height: int = 32  # target size after loading; 0 keeps native
    width: int = 28
    pipeline: str = "lhml"
    blocks: int = 0  # 0 = per-pipeline default; 1 = single full-image block
    block_rows: int = 8
    block_cols: int = 8
    dm: int = 3
    dn: int = 3
    epsilon_frac: float = 0.05
    max_sparsity: int = 8
    rotate_deg: float = 0.0
    rotate_jitter: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0
    corrupt_frac: float = 0.0
    rounds: int = 10
    node_cap: int = 64
    complement_per_class: int = 2
    delta: float = 0.0
    inlier_classes: int = 0  # 0 = half of the available classes
    roc_test_inliers: int = 0  # 0 = all held-out inlier samples
    roc_test_outliers: int = 0
    svm_c: float = 10.0
    svm_gamma: float = 0.0  # 0 = 1 / feature_length
    svm_tol: float = 1e-3
    meta_inputs: str = "lhml,lsgm"
    workers: int = 1


def _coerce(kind, raw):
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config_file(path):
    """Read a flat `key = value` file into an ExperimentConfig."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    kinds = {f.name: type(f.default) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(kinds[key], raw)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad value for {key!r}: {raw!r}") from None
    return ExperimentConfig(**values)


def format_value(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def config_echo(cfg):
    pairs = sorted((f.name, getattr(cfg, f.name)) for f in fields(cfg))
    return "".join(f"{k} = {format_value(v)}\n" for k, v in pairs)


# ---------------------------------------------------------------------------
# Dataset handling


@dataclass
class TestSet:
    images: list
    labels: list
    class_ids: list  # original directory ids, index = internal class - 1


def split_images(images, labels, k, train_per_class, test_per_class, seed):
    """Seeded per-class split without replacement; deterministic per seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    train_imgs, train_labels = [], []
    test_imgs, test_labels = [], []
    for cls in range(1, k + 1):
        idx = [i for i, lab in enumerate(labels) if lab == cls]
        if train_per_class > len(idx):
            raise ValueError(
                f"class {cls} has {len(idx)} samples, cannot train on {train_per_class}"
            )
        perm = rng.permutation(len(idx))
        chosen = [idx[p] for p in perm]
        train_part = chosen[:train_per_class]
        test_part = chosen[train_per_class:]
        if not test_part:
            raise ValueError(f"class {cls}: no samples left for testing")
        if test_per_class > 0:
            test_part = test_part[:test_per_class]
        train_imgs.extend(images[i] for i in train_part)
        train_labels.extend([cls] * len(train_part))
        test_imgs.extend(images[i] for i in test_part)
        test_labels.extend([cls] * len(test_part))
    train = LabeledTrainingSet(train_imgs, train_labels, k)
    return train, test_imgs, test_labels


def split_dataset(root, cfg):
    """Load `root/class_<id>/*.pgm` and split into train and test sets."""
    root = Path(root)
    class_dirs = []
    for entry in root.iterdir() if root.is_dir() else ():
        if entry.is_dir() and entry.name.startswith("class_"):
            try:
                class_dirs.append((int(entry.name[len("class_") :]), entry))
            except ValueError:
                continue
    class_dirs.sort()
    if not class_dirs:
        raise ValueError(f"no class_<id> directories under {root}")
    if cfg.k_classes and len(class_dirs) != cfg.k_classes:
        raise ValueError(f"config expects {cfg.k_classes} classes, found {len(class_dirs)}")

    images, labels = [], []
    for internal, (_, cdir) in enumerate(class_dirs, start=1):
        files = sorted(cdir.glob("*.pgm"))
        if not files:
            raise ValueError(f"{cdir}: no .pgm samples")
        for f in files:
            img = load_pgm(f)
            if cfg.height and cfg.width and (img.height != cfg.height or img.width != cfg.width):
                img = downsample(img, cfg.width, cfg.height)
            images.append(img)
            labels.append(internal)

    k = len(class_dirs)
    train, test_imgs, test_labels = split_images(
        images, labels, k, cfg.train_per_class, cfg.test_per_class, cfg.seed
    )
    class_ids = [cid for cid, _ in class_dirs]
    return train, TestSet(test_imgs, test_labels, class_ids)


def distort_image(img, cfg, rng):
    """Apply the configured rotation, scaling, and pixel corruption."""
    angle = cfg.rotate_deg
    if cfg.rotate_jitter > 0:
        angle += rng.uniform(-cfg.rotate_jitter, cfg.rotate_jitter)
    if angle != 0.0 or cfg.scale_x != 1.0 or cfg.scale_y != 1.0:
        img = warp(img, angle, cfg.scale_x, cfg.scale_y, 0.0, 0.0, fill=0.0)
    if cfg.corrupt_frac > 0.0:
        img = corrupt_pixels(img, cfg.corrupt_frac, int(rng.integers(2**62)))
    return img


def distort_all(images, cfg, stream=1):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, stream]))
    return [distort_image(img, cfg, rng) for img in images]


def resolve_blocks(cfg, height, width):
    count = cfg.blocks
    if count == 0:
        count = 3 if cfg.pipeline == "lsgm" else 42
    if count == 1:
        return [BlockSpec(0, 0, height, width)]
    return block_layout(height, width, count, cfg.block_rows, cfg.block_cols)


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _epsilon(cfg, y):
    return cfg.epsilon_frac * float(np.linalg.norm(y))


# ---------------------------------------------------------------------------
# Pipelines


class SrcPipeline:
    """Whole-image sparse classification against the global dictionary."""

    def __init__(self, dictionary, k):
        self.dictionary = dictionary
        self.k = k

    @classmethod
    def train(cls, train_set, cfg):
        d = build_global_dictionary(train_set)
        if cfg.corrupt_frac > 0.0:
            d = with_error_atoms(d)
        return cls(d, train_set.k_classes)

    def predict(self, img, cfg):
        y = img.vector()
        return src_global(y, self.dictionary, _epsilon(cfg, y), cfg.max_sparsity, self.k)

    def outlier_score(self, img, cfg):
        y = img.vector()
        code = omp(self.dictionary, y, _epsilon(cfg, y), cfg.max_sparsity)
        return sci(code, self.dictionary, self.k)

    def to_entries(self):
        entries = self.dictionary.to_entries("dict_")
        entries["k"] = np.array([self.k], dtype=np.int64)
        return entries

    @classmethod
    def from_entries(cls, entries):
        return cls(LocalDictionary.from_entries(entries, "dict_"), int(entries["k"][0]))


class LocalPipeline:
    """Per-block sparse decisions fused by voting or by log-probability sums."""

    def __init__(self, blocks, dicts, k):
        self.blocks = blocks
        self.dicts = dicts
        self.k = k

    @classmethod
    def train(cls, train_set, cfg, blocks):
        win = SearchWindow(cfg.dm, cfg.dn)
        dicts = []
        for spec in blocks:
            d = build_local_dictionary(train_set, spec, win)
            if cfg.corrupt_frac > 0.0:
                d = with_error_atoms(d)
            dicts.append(d)
        return cls(list(blocks), dicts, train_set.k_classes)

    def block_decisions(self, img, cfg):
        out = []
        for l, (spec, d) in enumerate(zip(self.blocks, self.dicts)):
            y = img.pixels[spec.row : spec.row + spec.rows, spec.col : spec.col + spec.cols].reshape(-1)
            code = omp(d, y, _epsilon(cfg, y), cfg.max_sparsity)
            residuals = class_residuals(d, y, code, self.k)
            out.append(block_decision(l, residuals))
        return out

    def predict_voting(self, img, cfg):
        decisions = self.block_decisions(img, cfg)
        label = majority_vote([d.label for d in decisions], self.k)
        counts = np.bincount([d.label for d in decisions], minlength=self.k + 1)[1:]
        return SoftScores(per_class=counts / len(decisions), decision=label)

    def predict_ml(self, img, cfg):
        return ml_fuse(self.block_decisions(img, cfg))

    def to_entries(self):
        entries = {
            "k": np.array([self.k], dtype=np.int64),
            "n_blocks": np.array([len(self.blocks)], dtype=np.int64),
            "block_specs": np.array(
                [(b.row, b.col, b.rows, b.cols) for b in self.blocks], dtype=np.int64
            ),
        }
        for l, d in enumerate(self.dicts):
            entries.update(d.to_entries(f"b{l}_"))
        return entries

    @classmethod
    def from_entries(cls, entries):
        blocks = [BlockSpec(*row) for row in entries["block_specs"].astype(int)]
        dicts = [
            LocalDictionary.from_entries(entries, f"b{l}_") for l in range(len(blocks))
        ]
        return cls(blocks, dicts, int(entries["k"][0]))


class LsgmPipeline:
    """One-vs-all boosted tree-graph classification over local sparse features.

    For every class, per-block binary dictionaries produce sparse feature
    vectors (capped to the highest-variance coordinates); a thickened
    discriminative graph pair scores the concatenated features.
    """

    def __init__(self, blocks, k, dicts, node_idx, pairs):
        self.blocks = blocks
        self.k = k
        self.dicts = dicts  # dicts[class-1][block]
        self.node_idx = node_idx  # node_idx[class-1][block]
        self.pairs = pairs  # pairs[class-1]

    @classmethod
    def train(cls, train_set, cfg, blocks):
        win = SearchWindow(cfg.dm, cfg.dn)
        dicts, node_idx, pairs = [], [], []
        for target in range(1, train_set.k_classes + 1):
            cls_dicts, cls_nodes = [], []
            target_t = [t for t, lab in enumerate(train_set.labels) if lab == target]
            complement_t = None
            feats_p = [[] for _ in target_t]
            feats_q = None
            for spec in blocks:
                d = build_binary_dictionary(
                    train_set, target, spec, win, cfg.complement_per_class, cfg.seed
                )
                feature_mask = d.col_class != ERROR_CLASS
                if cfg.corrupt_frac > 0.0:
                    d = with_error_atoms(d)
                    feature_mask = d.col_class != ERROR_CLASS
                if complement_t is None:
                    comp_cols = d.col_class == COMPLEMENT_LABEL
                    complement_t = sorted(set(d.col_provenance[comp_cols, 0].tolist()))
                    feats_q = [[] for _ in complement_t]

                block_p = cls._block_features(train_set, target_t, spec, d, feature_mask, cfg)
                block_q = cls._block_features(train_set, complement_t, spec, d, feature_mask, cfg)
                pooled = np.vstack([block_p, block_q])
                keep = _top_variance(pooled, cfg.node_cap)
                cls_dicts.append(d)
                cls_nodes.append(keep)
                for row, vec in zip(feats_p, block_p[:, keep]):
                    row.append(vec)
                for row, vec in zip(feats_q, block_q[:, keep]):
                    row.append(vec)

            xp = np.array([np.concatenate(r) for r in feats_p])
            xq = np.array([np.concatenate(r) for r in feats_q])
            slices = []
            start = 0
            for keep in cls_nodes:
                slices.append(slice(start, start + len(keep)))
                start += len(keep)
            pair = boost_thicken(xp, xq, cfg.rounds, block_slices=slices)
            dicts.append(cls_dicts)
            node_idx.append(cls_nodes)
            pairs.append(pair)
        return cls(list(blocks), train_set.k_classes, dicts, node_idx, pairs)

    @staticmethod
    def _block_features(train_set, indices, spec, d, feature_mask, cfg):
        rows = []
        for t in indices:
            img = train_set.images[t]
            y = img.pixels[spec.row : spec.row + spec.rows, spec.col : spec.col + spec.cols].reshape(-1)
            code = omp(d, y, _epsilon(cfg, y), cfg.max_sparsity)
            rows.append(code.coeffs[feature_mask])
        return np.array(rows)

    def features_for(self, img, cfg, target):
        parts = []
        for spec, d, keep in zip(
            self.blocks, self.dicts[target - 1], self.node_idx[target - 1]
        ):
            y = img.pixels[spec.row : spec.row + spec.rows, spec.col : spec.col + spec.cols].reshape(-1)
            code = omp(d, y, _epsilon(cfg, y), cfg.max_sparsity)
            feats = code.coeffs[d.col_class != ERROR_CLASS]
            parts.append(feats[keep])
        return np.concatenate(parts)

    def predict(self, img, cfg):
        scores = np.zeros(self.k)
        for target in range(1, self.k + 1):
            scores[target - 1] = llr(self.pairs[target - 1], self.features_for(img, cfg, target))
        return SoftScores(per_class=scores, decision=int(np.argmax(scores)) + 1)

    def to_entries(self):
        entries = {
            "k": np.array([self.k], dtype=np.int64),
            "n_blocks": np.array([len(self.blocks)], dtype=np.int64),
            "block_specs": np.array(
                [(b.row, b.col, b.rows, b.cols) for b in self.blocks], dtype=np.int64
            ),
        }
        for ci in range(self.k):
            for l in range(len(self.blocks)):
                entries.update(self.dicts[ci][l].to_entries(f"c{ci}_b{l}_dict_"))
                entries[f"c{ci}_b{l}_nodes"] = np.asarray(self.node_idx[ci][l], dtype=np.int64)
            entries.update(pair_to_entries(self.pairs[ci], f"c{ci}_"))
        return entries

    @classmethod
    def from_entries(cls, entries):
        k = int(entries["k"][0])
        blocks = [BlockSpec(*row) for row in entries["block_specs"].astype(int)]
        dicts, node_idx, pairs = [], [], []
        for ci in range(k):
            dicts.append(
                [
                    LocalDictionary.from_entries(entries, f"c{ci}_b{l}_dict_")
                    for l in range(len(blocks))
                ]
            )
            node_idx.append(
                [entries[f"c{ci}_b{l}_nodes"].astype(np.int64) for l in range(len(blocks))]
            )
            pairs.append(pair_from_entries(entries, f"c{ci}_"))
        return cls(blocks, k, dicts, node_idx, pairs)


def _top_variance(features, cap):
    """Indices of the highest-variance coordinates, in coordinate order."""
    m = features.shape[1]
    if cap <= 0 or m <= cap:
        return np.arange(m, dtype=np.int64)
    var = features.var(axis=0)
    order = np.argsort(-var, kind="stable")[:cap]
    return np.sort(order).astype(np.int64)


def train_pipeline(train_set, cfg, blocks=None):
    if blocks is None:
        blocks = resolve_blocks(cfg, train_set.height, train_set.width)
    if cfg.pipeline == "src":
        return SrcPipeline.train(train_set, cfg)
    if cfg.pipeline in ("voting", "lhml"):
        return LocalPipeline.train(train_set, cfg, blocks)
    if cfg.pipeline == "lsgm":
        return LsgmPipeline.train(train_set, cfg, blocks)
    raise ValueError(f"unknown pipeline {cfg.pipeline!r}")


def pipeline_scores(model, img, cfg):
    """SoftScores of a trained pipeline on one (already distorted) image."""
    if isinstance(model, SrcPipeline):
        return model.predict(img, cfg)
    if isinstance(model, LsgmPipeline):
        return model.predict(img, cfg)
    if cfg.pipeline == "voting":
        return model.predict_voting(img, cfg)
    return model.predict_ml(img, cfg)


def outlier_score(model, img, cfg):
    """Scalar validity score: larger means more inlier-like."""
    if isinstance(model, SrcPipeline):
        return model.outlier_score(img, cfg)
    scores = pipeline_scores(model, img, cfg)
    return float(np.max(scores.per_class))


# ---------------------------------------------------------------------------
# Metrics and reports


@dataclass
class MetricsReport:
    n_test: int
    n_correct: int
    overall_rate: float  # percent
    class_ids: list
    per_class: np.ndarray  # (K, 2) columns: n_test, n_correct
    confusion: np.ndarray  # (K, K) true x predicted
    roc_points: list | None = None
    auc: float | None = None
    extras: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def compute_metrics(true_labels, pred_labels, k, class_ids=None):
    true_labels = list(true_labels)
    pred_labels = list(pred_labels)
    per_class = np.zeros((k, 2), dtype=np.int64)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        per_class[t - 1, 0] += 1
        per_class[t - 1, 1] += t == p
        confusion[t - 1, p - 1] += 1
    n_test = len(true_labels)
    n_correct = int(per_class[:, 1].sum())
    return MetricsReport(
        n_test=n_test,
        n_correct=n_correct,
        overall_rate=100.0 * n_correct / n_test if n_test else 0.0,
        class_ids=list(class_ids) if class_ids else list(range(1, k + 1)),
        per_class=per_class,
        confusion=confusion,
    )


def roc_sweep(scores_inlier, scores_outlier):
    """Threshold sweep; a sample is detected as inlier when score > delta.

    Returns (false-alarm, detection) points from (0, 0) to (1, 1); the
    sweep is monotone non-decreasing in both coordinates.
    """
    scores_inlier = list(scores_inlier)
    scores_outlier = list(scores_outlier)
    if not scores_inlier or not scores_outlier:
        raise ValueError("both score lists must be nonempty")
    inl = np.asarray(scores_inlier, dtype=np.float64)
    out = np.asarray(scores_outlier, dtype=np.float64)
    points = [(0.0, 0.0)]
    for delta in sorted(set(scores_inlier) | set(scores_outlier), reverse=True):
        pd = float(np.mean(inl > delta))
        fa = float(np.mean(out > delta))
        if (fa, pd) != points[-1]:
            points.append((fa, pd))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def roc_auc(points):
    area = 0.0
    for (fa0, pd0), (fa1, pd1) in zip(points, points[1:]):
        area += (fa1 - fa0) * (pd0 + pd1) / 2.0
    return area


def emit_report(report, out_dir, cfg=None):
    """Write summary.csv, per_class.csv, optional roc.csv, and config.echo."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = [
        ("overall_rate", format_value(report.overall_rate)),
        ("n_test", str(report.n_test)),
        ("n_correct", str(report.n_correct)),
    ]
    if report.auc is not None:
        rows.append(("auc", format_value(report.auc)))
    for key in sorted(report.extras):
        rows.append((key, format_value(report.extras[key])))
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        fh.write("metric,value\n")
        for name, value in rows:
            fh.write(f"{name},{value}\n")

    with open(out_dir / "per_class.csv", "w", newline="") as fh:
        fh.write("class,n_test,n_correct,rate\n")
        for i, (n, correct) in enumerate(report.per_class):
            rate = 100.0 * correct / n if n else 0.0
            fh.write(f"{report.class_ids[i]},{n},{correct},{format_value(rate)}\n")

    if report.roc_points:
        with open(out_dir / "roc.csv", "w", newline="") as fh:
            fh.write("false_alarm,detection\n")
            for fa, pd in report.roc_points:
                fh.write(f"{format_value(fa)},{format_value(pd)}\n")

    if cfg is not None:
        (out_dir / "config.echo").write_text(config_echo(cfg))


# ---------------------------------------------------------------------------
# Experiment drivers


def run_pipeline(cfg):
    """Train the configured pipeline and score the distorted test split."""
    if cfg.pipeline == "meta":
        return run_meta(cfg)
    if cfg.pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {cfg.pipeline!r}")

    t0 = time.perf_counter()
    train_set, test_set = split_dataset(cfg.dataset_root, cfg)
    test_images = distort_all(test_set.images, cfg)
    t1 = time.perf_counter()
    model = train_pipeline(train_set, cfg)
    t2 = time.perf_counter()
    preds = _map(lambda img: pipeline_scores(model, img, cfg).decision, test_images, cfg.workers)
    t3 = time.perf_counter()

    report = compute_metrics(test_set.labels, preds, train_set.k_classes, test_set.class_ids)
    report.timings = {"load": t1 - t0, "train": t2 - t1, "eval": t3 - t2}
    return report


def run_meta(cfg):
    """Train the first-stage classifiers plus the SVM meta-classifier."""
    t0 = time.perf_counter()
    train_set, test_set = split_dataset(cfg.dataset_root, cfg)
    test_images = distort_all(test_set.images, cfg)
    names = [n.strip() for n in cfg.meta_inputs.split(",") if n.strip()]
    if len(names) < 1:
        raise ValueError("meta_inputs must name at least one pipeline")

    models = {}
    for name in names:
        sub = replace(cfg, pipeline=name)
        models[name] = train_pipeline(train_set, sub)
    t1 = time.perf_counter()

    def score_block(name, images):
        sub = replace(cfg, pipeline=name)
        return np.array(
            [pipeline_scores(models[name], img, sub).per_class for img in images]
        )

    train_blocks = [score_block(name, train_set.images) for name in names]
    gamma = cfg.svm_gamma if cfg.svm_gamma > 0 else None
    svm = fit_meta(train_blocks, train_set.labels, c=cfg.svm_c, gamma=gamma, tol=cfg.svm_tol)
    t2 = time.perf_counter()

    test_blocks = [score_block(name, test_images) for name in names]
    stacked = np.hstack(test_blocks)
    preds = [meta_classify(svm, MetaSample(stacked[i], -1)) for i in range(len(test_images))]
    t3 = time.perf_counter()

    report = compute_metrics(test_set.labels, preds, train_set.k_classes, test_set.class_ids)
    for j, name in enumerate(names):
        sub_preds = [int(np.argmax(block)) + 1 for block in test_blocks[j]]
        sub_report = compute_metrics(test_set.labels, sub_preds, train_set.k_classes)
        report.extras[f"{name}_rate"] = sub_report.overall_rate
    report.timings = {"train": t1 - t0, "meta_train": t2 - t1, "eval": t3 - t2}
    return report


def run_roc(cfg):
    """Outlier-rejection experiment: train on a class subset, sweep delta."""
    t0 = time.perf_counter()
    root = Path(cfg.dataset_root)
    probe = replace(cfg, k_classes=0, test_per_class=0)
    train_all, test_all = split_dataset(root, probe)
    k = train_all.k_classes
    n_in = cfg.inlier_classes if cfg.inlier_classes > 0 else k // 2
    if not 1 <= n_in < k:
        raise ValueError(f"inlier class count {n_in} must lie in [1, {k - 1}]")

    inlier_train_imgs = [img for img, lab in zip(train_all.images, train_all.labels) if lab <= n_in]
    inlier_train_labels = [lab for lab in train_all.labels if lab <= n_in]
    train_set = LabeledTrainingSet(inlier_train_imgs, inlier_train_labels, n_in)

    inlier_pool = [img for img, lab in zip(test_all.images, test_all.labels) if lab <= n_in]
    outlier_pool = [img for img, lab in zip(test_all.images, test_all.labels) if lab > n_in]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    if cfg.roc_test_inliers > 0:
        pick = rng.choice(len(inlier_pool), size=min(cfg.roc_test_inliers, len(inlier_pool)), replace=False)
        inlier_pool = [inlier_pool[i] for i in sorted(pick)]
    if cfg.roc_test_outliers > 0:
        pick = rng.choice(len(outlier_pool), size=min(cfg.roc_test_outliers, len(outlier_pool)), replace=False)
        outlier_pool = [outlier_pool[i] for i in sorted(pick)]
    if not inlier_pool or not outlier_pool:
        raise ValueError("need both inlier and outlier test samples")

    inlier_tests = distort_all(inlier_pool, cfg, stream=3)
    outlier_tests = distort_all(outlier_pool, cfg, stream=4)
    t1 = time.perf_counter()

    model = train_pipeline(train_set, cfg)
    t2 = time.perf_counter()
    in_scores = _map(lambda img: outlier_score(model, img, cfg), inlier_tests, cfg.workers)
    out_scores = _map(lambda img: outlier_score(model, img, cfg), outlier_tests, cfg.workers)
    t3 = time.perf_counter()

    points = roc_sweep(in_scores, out_scores)
    correct = sum(1 for s in in_scores if s > cfg.delta) + sum(
        1 for s in out_scores if s <= cfg.delta
    )
    n_test = len(in_scores) + len(out_scores)
    report = MetricsReport(
        n_test=n_test,
        n_correct=correct,
        overall_rate=100.0 * correct / n_test,
        class_ids=[],
        per_class=np.zeros((0, 2), dtype=np.int64),
        confusion=np.zeros((0, 0), dtype=np.int64),
        roc_points=points,
        auc=roc_auc(points),
        extras={"n_inliers": float(len(in_scores)), "n_outliers": float(len(out_scores))},
        timings={"load": t1 - t0, "train": t2 - t1, "score": t3 - t2},
    )
    return report


def run_sweep(cfg):
    """Recognition rate as a function of the block-count preset."""
    if cfg.pipeline not in ("voting", "lhml", "lsgm"):
        raise ValueError("block sweep requires a local pipeline (voting, lhml, lsgm)")
    results = []
    for count in SWEEP_COUNTS:
        report = run_pipeline(replace(cfg, blocks=count))
        results.append((count, report))
    return results


# ---------------------------------------------------------------------------
# Model caching

_KIND_TO_CLS = {"src": SrcPipeline, "voting": LocalPipeline, "lhml": LocalPipeline, "lsgm": LsgmPipeline}


def save_pipeline(model, cfg, path):
    entries = model.to_entries()
    entries["pipeline_kind"] = np.frombuffer(cfg.pipeline.encode(), dtype=np.uint8).copy()
    container.write_arrays(path, entries)


def load_pipeline(path):
    entries = container.read_arrays(path)
    kind = entries["pipeline_kind"].tobytes().decode()
    return _KIND_TO_CLS[kind].from_entries(entries)
