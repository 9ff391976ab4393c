"""Meta-classification of soft classifier outputs with an RBF-kernel SVM.

The multiclass problem is decomposed one-vs-one; each pairwise machine is
trained by sequential minimal optimization. All pivot choices are
deterministic so retraining on identical input reproduces the model
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container

ALPHA_EPS = 1e-12
STD_FLOOR = 1e-12


@dataclass
class MetaSample:
    """Concatenated per-classifier score vectors plus the true class id."""

    features: np.ndarray
    label: int


@dataclass
class PairwiseSvm:
    """One binary machine of the one-vs-one decomposition."""

    class_pos: int  # predicted when the decision value is nonnegative
    class_neg: int
    x: np.ndarray
    y: np.ndarray  # +1 for class_pos rows
    alphas: np.ndarray
    bias: float
    gamma: float


@dataclass
class SvmModel:
    classes: list
    c: float
    gamma: float
    tol: float
    pairs: list
    # Optional per-dimension affine standardization applied before kernels.
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None


def _rbf_matrix(a, b, gamma):
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _smo(kernel, y, c, tol, max_passes=10000):
    """Platt's SMO on a precomputed kernel matrix. Deterministic."""
    n = len(y)
    alphas = np.zeros(n)
    bias = 0.0
    # errors[i] = decision(x_i) - y_i with decision = sum alpha y K - bias
    errors = -y.astype(np.float64)

    def take_step(i1, i2):
        nonlocal bias, errors
        if i1 == i2:
            return False
        a1o, a2o = alphas[i1], alphas[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if y1 != y2:
            lo, hi = max(0.0, a2o - a1o), min(c, c + a2o - a1o)
        else:
            lo, hi = max(0.0, a1o + a2o - c), min(c, a1o + a2o)
        if lo >= hi:
            return False
        k11, k12, k22 = kernel[i1, i1], kernel[i1, i2], kernel[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2o + y2 * (e1 - e2) / eta
            a2 = min(max(a2, lo), hi)
        else:
            # Degenerate curvature: evaluate the objective at both clamp ends.
            f1 = y1 * (e1 + bias) - a1o * k11 - s * a2o * k12
            f2 = y2 * (e2 + bias) - s * a1o * k12 - a2o * k22
            l1 = a1o + s * (a2o - lo)
            h1 = a1o + s * (a2o - hi)
            obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12
            obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12
            if obj_lo < obj_hi - ALPHA_EPS:
                a2 = lo
            elif obj_lo > obj_hi + ALPHA_EPS:
                a2 = hi
            else:
                a2 = a2o
        if abs(a2 - a2o) < ALPHA_EPS * (a2 + a2o + ALPHA_EPS):
            return False
        a1 = a1o + s * (a2o - a2)

        b1 = e1 + y1 * (a1 - a1o) * k11 + y2 * (a2 - a2o) * k12 + bias
        b2 = e2 + y1 * (a1 - a1o) * k12 + y2 * (a2 - a2o) * k22 + bias
        if 0.0 < a1 < c:
            new_bias = b1
        elif 0.0 < a2 < c:
            new_bias = b2
        else:
            new_bias = (b1 + b2) / 2.0

        errors += (
            y1 * (a1 - a1o) * kernel[i1]
            + y2 * (a2 - a2o) * kernel[i2]
            - (new_bias - bias)
        )
        alphas[i1], alphas[i2] = a1, a2
        bias = new_bias
        return True

    def examine(i2):
        y2, a2, e2 = y[i2], alphas[i2], errors[i2]
        r2 = e2 * y2
        if not ((r2 < -tol and a2 < c) or (r2 > tol and a2 > 0)):
            return False
        non_bound = np.nonzero((alphas > 0) & (alphas < c))[0]
        if len(non_bound) > 1:
            i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - e2))])
            if take_step(i1, i2):
                return True
        for i1 in non_bound:
            if take_step(int(i1), i2):
                return True
        for i1 in range(n):
            if take_step(i1, i2):
                return True
        return False

    examine_all = True
    changed = 0
    passes = 0
    while (changed > 0 or examine_all) and passes < max_passes:
        changed = 0
        targets = range(n) if examine_all else np.nonzero((alphas > 0) & (alphas < c))[0]
        for i in targets:
            if examine(int(i)):
                changed += 1
        if examine_all:
            examine_all = False
        elif changed == 0:
            examine_all = True
        passes += 1
    return alphas, bias


def train_svm(samples, c=10.0, gamma=None, tol=1e-3):
    """Train the one-vs-one RBF machines to KKT tolerance `tol`.

    `gamma` defaults to 1 / feature_length. Raises on a single-class input
    or non-positive hyperparameters.
    """
    if c <= 0:
        raise ValueError("C must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray([s.features for s in samples], dtype=np.float64)
    labels = np.asarray([s.label for s in samples], dtype=np.int64)
    classes = sorted(set(int(v) for v in labels))
    if len(classes) < 2:
        raise ValueError("need samples from at least 2 classes")
    if gamma is None:
        gamma = 1.0 / x.shape[1]
    if gamma <= 0:
        raise ValueError("gamma must be positive")

    pairs = []
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            ca, cb = classes[ai], classes[bi]
            mask = (labels == ca) | (labels == cb)
            xs = x[mask]
            ys = np.where(labels[mask] == ca, 1.0, -1.0)
            kernel = _rbf_matrix(xs, xs, gamma)
            alphas, bias = _smo(kernel, ys, c, tol)
            pairs.append(
                PairwiseSvm(class_pos=ca, class_neg=cb, x=xs, y=ys, alphas=alphas, bias=bias, gamma=gamma)
            )
    return SvmModel(classes=classes, c=c, gamma=gamma, tol=tol, pairs=pairs)


def decision_value(pair, features):
    """Signed distance-style score of one pairwise machine."""
    k = _rbf_matrix(pair.x, features[None, :], pair.gamma)[:, 0]
    return float(np.sum(pair.alphas * pair.y * k) - pair.bias)


def meta_classify(model, sample):
    """One-vs-one vote; ties break to the lowest class id."""
    feats = np.asarray(sample.features, dtype=np.float64)
    if model.feature_mean is not None:
        feats = (feats - model.feature_mean) / model.feature_std
    if model.pairs and feats.shape[0] != model.pairs[0].x.shape[1]:
        raise ValueError(
            f"feature length {feats.shape[0]} != model dimension {model.pairs[0].x.shape[1]}"
        )
    votes = {cls: 0 for cls in model.classes}
    for pair in model.pairs:
        value = decision_value(pair, feats)
        votes[pair.class_pos if value >= 0 else pair.class_neg] += 1
    best = max(votes.values())
    return min(cls for cls, v in votes.items() if v == best)


def fit_meta(features_by_classifier, labels, c=10.0, gamma=None, tol=1e-3):
    """Standardize each classifier's score block and train the meta SVM.

    `features_by_classifier` is a list of (n_samples, k) arrays, one per
    first-stage classifier. Each block is shifted and scaled by its scalar
    training mean and standard deviation (soft outputs of different
    classifiers live on very different scales), and the parameters are
    stored on the model so inference standardizes identically.
    """
    blocks = [np.asarray(b, dtype=np.float64) for b in features_by_classifier]
    n = blocks[0].shape[0]
    mean_parts, std_parts, scaled = [], [], []
    for b in blocks:
        if b.shape[0] != n:
            raise ValueError("classifier blocks disagree on sample count")
        mu = float(b.mean())
        sd = max(float(b.std()), STD_FLOOR)
        mean_parts.append(np.full(b.shape[1], mu))
        std_parts.append(np.full(b.shape[1], sd))
        scaled.append((b - mu) / sd)
    x = np.hstack(scaled)
    samples = [MetaSample(x[i], int(labels[i])) for i in range(n)]
    model = train_svm(samples, c=c, gamma=gamma, tol=tol)
    model.feature_mean = np.concatenate(mean_parts)
    model.feature_std = np.concatenate(std_parts)
    return model


# ---------------------------------------------------------------------------
# Serialization


def save_model(path, model):
    entries = {
        "classes": np.asarray(model.classes, dtype=np.int64),
        "hyper": np.array([model.c, model.gamma, model.tol]),
        "n_pairs": np.array([len(model.pairs)], dtype=np.int64),
    }
    if model.feature_mean is not None:
        entries["feature_mean"] = model.feature_mean
        entries["feature_std"] = model.feature_std
    for i, pair in enumerate(model.pairs):
        entries[f"p{i}_classes"] = np.array([pair.class_pos, pair.class_neg], dtype=np.int64)
        entries[f"p{i}_x"] = pair.x
        entries[f"p{i}_y"] = pair.y
        entries[f"p{i}_alphas"] = pair.alphas
        entries[f"p{i}_bias"] = np.array([pair.bias])
    container.write_arrays(path, entries)


def load_model(path):
    entries = container.read_arrays(path)
    c, gamma, tol = entries["hyper"]
    pairs = []
    for i in range(int(entries["n_pairs"][0])):
        cp, cn = entries[f"p{i}_classes"]
        pairs.append(
            PairwiseSvm(
                class_pos=int(cp),
                class_neg=int(cn),
                x=entries[f"p{i}_x"],
                y=entries[f"p{i}_y"],
                alphas=entries[f"p{i}_alphas"],
                bias=float(entries[f"p{i}_bias"][0]),
                gamma=float(gamma),
            )
        )
    model = SvmModel(
        classes=[int(v) for v in entries["classes"]],
        c=float(c),
        gamma=float(gamma),
        tol=float(tol),
        pairs=pairs,
    )
    if "feature_mean" in entries:
        model.feature_mean = entries["feature_mean"]
        model.feature_std = entries["feature_std"]
    return model
