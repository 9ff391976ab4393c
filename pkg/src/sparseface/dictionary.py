"""Dictionaries of vectorized training blocks.

A dictionary column is one block lifted from one training image at one
spatial offset. Columns are unit-normalized with the original norm kept
alongside; all-dark blocks stay as zero columns so provenance indexing
never shifts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .imaging import BlockSpec, GrayImage

# Virtual label for corruption-absorbing identity atoms. Columns carrying it
# back every class reconstruction but never compete for an identity.
ERROR_CLASS = 0

TARGET_LABEL = 1
COMPLEMENT_LABEL = 2


@dataclass
class LabeledTrainingSet:
    """Equally sized training images with class ids in 1..k_classes."""

    images: list
    labels: list
    k_classes: int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if not self.images:
            raise ValueError("training set is empty")
        h, w = self.images[0].height, self.images[0].width
        for img in self.images:
            if img.height != h or img.width != w:
                raise ValueError("training images must share identical dimensions")
        present = set(self.labels)
        expected = set(range(1, self.k_classes + 1))
        if not present == expected:
            missing = sorted(expected - present)
            extra = sorted(present - expected)
            raise ValueError(f"labels must cover 1..{self.k_classes}; missing {missing}, extra {extra}")

    @property
    def height(self):
        return self.images[0].height

    @property
    def width(self):
        return self.images[0].width


@dataclass(frozen=True)
class SearchWindow:
    """Half-extents of the offset range used to harvest training atoms."""

    dm: int
    dn: int

    def __post_init__(self):
        if self.dm < 0 or self.dn < 0:
            raise ValueError("window half-extents must be nonnegative")


@dataclass
class LocalDictionary:
    """Matrix of vectorized training blocks with per-column bookkeeping.

    atoms          (block_len, n_cols), unit columns (zero columns allowed)
    col_class      class id per column; ERROR_CLASS marks identity atoms
    col_provenance (n_cols, 3) rows of (training index, row offset, col offset)
    col_norms      Euclidean norms before normalization (0 for zero columns)
    """

    atoms: np.ndarray
    col_class: np.ndarray
    col_provenance: np.ndarray
    col_norms: np.ndarray

    @property
    def n_cols(self):
        return self.atoms.shape[1]

    @property
    def block_len(self):
        return self.atoms.shape[0]

    def n_classes(self):
        real = self.col_class[self.col_class != ERROR_CLASS]
        return int(real.max()) if real.size else 0

    def to_entries(self, prefix=""):
        return {
            prefix + "atoms": self.atoms,
            prefix + "col_class": self.col_class,
            prefix + "col_provenance": self.col_provenance,
            prefix + "col_norms": self.col_norms,
        }

    @classmethod
    def from_entries(cls, entries, prefix=""):
        return cls(
            atoms=entries[prefix + "atoms"],
            col_class=entries[prefix + "col_class"].astype(np.int64),
            col_provenance=entries[prefix + "col_provenance"].astype(np.int64),
            col_norms=entries[prefix + "col_norms"],
        )

    def save(self, path):
        container.write_arrays(path, self.to_entries())

    @classmethod
    def load(cls, path):
        return cls.from_entries(container.read_arrays(path))


def _finalize(columns, classes, provenance):
    atoms = np.stack(columns, axis=1)
    norms = np.linalg.norm(atoms, axis=0)
    nonzero = norms > 0
    atoms[:, nonzero] /= norms[nonzero]
    return LocalDictionary(
        atoms=atoms,
        col_class=np.asarray(classes, dtype=np.int64),
        col_provenance=np.asarray(provenance, dtype=np.int64).reshape(-1, 3),
        col_norms=norms,
    )


def _window_blocks(img, spec, win):
    """Yield (di, dj, vectorized block) for every in-bounds offset."""
    h, w = img.height, img.width
    for di in range(-win.dm, win.dm + 1):
        r = spec.row + di
        if r < 0 or r + spec.rows > h:
            continue
        for dj in range(-win.dn, win.dn + 1):
            c = spec.col + dj
            if c < 0 or c + spec.cols > w:
                continue
            yield di, dj, img.pixels[r : r + spec.rows, c : c + spec.cols].reshape(-1).copy()


def build_local_dictionary(train, spec, win):
    """Harvest every training block whose offset lies inside the window.

    Offsets that push the block outside a training image are skipped, so
    boundary dictionaries shrink instead of padding. Raises if no offset
    lands inside any image.
    """
    columns, classes, provenance = [], [], []
    for t, (img, label) in enumerate(zip(train.images, train.labels)):
        for di, dj, vec in _window_blocks(img, spec, win):
            columns.append(vec)
            classes.append(label)
            provenance.append((t, di, dj))
    if not columns:
        raise ValueError("block lies outside the training images for every offset")
    return _finalize(columns, classes, provenance)


def build_global_dictionary(train):
    """One column per full vectorized training image, in training-set order."""
    spec = BlockSpec(0, 0, train.height, train.width)
    return build_local_dictionary(train, spec, SearchWindow(0, 0))


def build_binary_dictionary(train, target_class, spec, win, complement_per_class, seed):
    """Target-class atoms followed by seeded complement atoms, relabeled binary.

    All blocks of the target class come first (label TARGET_LABEL), then
    blocks from `complement_per_class` uniformly chosen training images of
    every other class in ascending class order (label COMPLEMENT_LABEL).
    """
    if complement_per_class < 1:
        raise ValueError("complement_per_class must be >= 1")
    if not 1 <= target_class <= train.k_classes:
        raise ValueError(f"target class {target_class} outside 1..{train.k_classes}")

    by_class = {}
    for t, label in enumerate(train.labels):
        by_class.setdefault(label, []).append(t)

    rng = np.random.default_rng(seed)
    chosen = list(by_class[target_class])
    binary_labels = [TARGET_LABEL] * len(chosen)
    for cls in sorted(by_class):
        if cls == target_class:
            continue
        pool = by_class[cls]
        if complement_per_class > len(pool):
            raise ValueError(
                f"class {cls} has {len(pool)} samples, need {complement_per_class}"
            )
        picks = sorted(rng.choice(len(pool), size=complement_per_class, replace=False))
        chosen.extend(pool[p] for p in picks)
        binary_labels.extend([COMPLEMENT_LABEL] * complement_per_class)

    columns, classes, provenance = [], [], []
    for t, label in zip(chosen, binary_labels):
        for di, dj, vec in _window_blocks(train.images[t], spec, win):
            columns.append(vec)
            classes.append(label)
            provenance.append((t, di, dj))
    if not columns:
        raise ValueError("block lies outside the training images for every offset")
    return _finalize(columns, classes, provenance)


def with_error_atoms(d):
    """Append unit identity columns labeled ERROR_CLASS.

    Gives the pursuit an escape hatch for corrupted pixels: the identity
    atoms absorb gross per-pixel errors and are shared by every class
    when residuals are computed.
    """
    n = d.block_len
    eye = np.eye(n)
    prov = np.column_stack(
        [np.full(n, -1, dtype=np.int64), np.arange(n, dtype=np.int64), np.full(n, -1, dtype=np.int64)]
    )
    return LocalDictionary(
        atoms=np.hstack([d.atoms, eye]),
        col_class=np.concatenate([d.col_class, np.full(n, ERROR_CLASS, dtype=np.int64)]),
        col_provenance=np.vstack([d.col_provenance, prov]),
        col_norms=np.concatenate([d.col_norms, np.ones(n)]),
    )
