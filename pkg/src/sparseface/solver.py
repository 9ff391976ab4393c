"""Greedy sparse recovery against block dictionaries.

Orthogonal matching pursuit plus the per-class residual and sparsity
concentration measures driving the recognition decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dictionary import ERROR_CLASS

# Near-duplicate neighboring blocks make supports ill-conditioned; a tiny
# ridge keeps the normal equations solvable.
LS_RIDGE = 1e-10
RESIDUAL_FLOOR = 1e-12
# Residuals below this fraction of ||y|| count as zero when testing the
# stopping rule; the ridge keeps exact matches from reaching 0.0 literally.
STOP_REL_FLOOR = 1e-9


@dataclass
class SparseCode:
    """Recovered coefficients with support, residual norm and step count."""

    coeffs: np.ndarray
    support: list
    residual_norm: float
    iterations: int


def omp(dictionary, y, epsilon, max_sparsity):
    """Orthogonal matching pursuit.

    Repeatedly selects the column with maximum absolute correlation to the
    current residual (ties to the lowest column index), re-solves least
    squares on the grown support, and stops once the residual norm drops
    to `epsilon` or the support reaches `max_sparsity`.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    atoms = dictionary.atoms
    if y.shape[0] != atoms.shape[0]:
        raise ValueError(f"signal length {y.shape[0]} != dictionary rows {atoms.shape[0]}")
    if max_sparsity < 1:
        raise ValueError("max_sparsity must be >= 1")
    if not np.any(dictionary.col_norms > 0):
        raise ValueError("dictionary has no nonzero atoms")

    n_cols = atoms.shape[1]
    support = []
    selected = np.zeros(n_cols, dtype=bool)
    coeffs = np.zeros(n_cols)
    residual = y.copy()
    res_norm = float(np.linalg.norm(residual))
    stop_at = max(epsilon, STOP_REL_FLOOR * res_norm)

    while res_norm > stop_at and len(support) < max_sparsity:
        corr = np.abs(atoms.T @ residual)
        corr[selected] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 0.0:
            break
        support.append(j)
        selected[j] = True
        sub = atoms[:, support]
        gram = sub.T @ sub + LS_RIDGE * np.eye(len(support))
        sol = np.linalg.solve(gram, sub.T @ y)
        residual = y - sub @ sol
        res_norm = float(np.linalg.norm(residual))

    if support:
        coeffs[support] = sol
    return SparseCode(
        coeffs=coeffs,
        support=list(support),
        residual_norm=res_norm,
        iterations=len(support),
    )


def class_residuals(dictionary, y, code, n_classes=None):
    """Reconstruction error using only each class's coefficients.

    Entry k-1 is ||y - D delta_k(coeffs)||_2 where delta_k zeroes every
    coefficient not labeled class k. Identity atoms labeled ERROR_CLASS
    contribute to every class's reconstruction. Classes absent from the
    dictionary score ||y||_2, and every entry is capped at ||y||_2: a class
    whose masked coefficients overshoot the signal explains nothing, so it
    scores no worse than the empty reconstruction.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if n_classes is None:
        n_classes = dictionary.n_classes()
    y_norm = float(np.linalg.norm(y))
    out = np.full(n_classes, y_norm)
    if not code.support:
        return out

    sup = np.asarray(code.support, dtype=np.int64)
    sup_class = dictionary.col_class[sup]
    contrib = dictionary.atoms[:, sup] * code.coeffs[sup]
    err_recon = contrib[:, sup_class == ERROR_CLASS].sum(axis=1)

    present = np.unique(dictionary.col_class)
    for k in range(1, n_classes + 1):
        if k not in present:
            continue
        recon = err_recon + contrib[:, sup_class == k].sum(axis=1)
        out[k - 1] = min(float(np.linalg.norm(y - recon)), y_norm)
    return out


def sci(code, dictionary, n_classes):
    """Sparsity concentration index in [0, 1].

    1 means the entire l1 mass of the code sits in a single class, 0 means
    it is spread uniformly over all classes. Identity atoms are ignored.
    """
    mass = np.abs(code.coeffs)
    keep = dictionary.col_class != ERROR_CLASS
    labels = dictionary.col_class[keep]
    mass = mass[keep]
    total = float(mass.sum())
    if total <= 0.0:
        raise ValueError("SCI is undefined for a zero code")
    if n_classes < 2:
        return 1.0
    per_class = np.bincount(labels, weights=mass, minlength=n_classes + 1)[1 : n_classes + 1]
    value = (n_classes * per_class.max() / total - 1.0) / (n_classes - 1)
    return float(np.clip(value, 0.0, 1.0))
