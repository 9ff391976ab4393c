"""Per-block identity decisions, fusion rules, and block layouts.

Two fusion schemes over block-level sparse codes: hard majority voting and
a soft scheme whose per-block class probabilities are inversely
proportional to the class reconstruction residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import BlockSpec
from .solver import RESIDUAL_FLOOR, class_residuals, omp


@dataclass
class SoftScores:
    """Per-class real scores with the argmax decision (ties to lowest id)."""

    per_class: np.ndarray
    decision: int


@dataclass
class BlockDecision:
    """One block's residual profile, probability profile, and label."""

    block_index: int
    residuals: np.ndarray
    label: int
    probs: np.ndarray


def _soft(per_class):
    return SoftScores(per_class=np.asarray(per_class, dtype=np.float64),
                      decision=int(np.argmax(per_class)) + 1)


def block_identity(residuals):
    """Class with the minimal residual; ties break to the lowest class id."""
    residuals = np.asarray(residuals, dtype=np.float64)
    if np.any(np.isnan(residuals)):
        raise ValueError("NaN residual")
    return int(np.argmin(residuals)) + 1


def block_decision(block_index, residuals):
    """Bundle residuals with the inverse-residual probability profile."""
    residuals = np.asarray(residuals, dtype=np.float64)
    inv = 1.0 / np.maximum(residuals, RESIDUAL_FLOOR)
    probs = inv / inv.sum()
    return BlockDecision(
        block_index=block_index,
        residuals=residuals,
        label=block_identity(residuals),
        probs=probs,
    )


def majority_vote(labels, n_classes):
    """Most frequent label; ties break to the lowest class id."""
    labels = list(labels)
    if not labels:
        raise ValueError("no labels to vote on")
    counts = np.bincount(labels, minlength=n_classes + 1)[1:]
    return int(np.argmax(counts)) + 1


def ml_fuse(decisions):
    """Sum per-block log probabilities and take the argmax class."""
    if not decisions:
        raise ValueError("no block decisions to fuse")
    per_class = np.zeros(len(decisions[0].probs))
    for d in decisions:
        per_class += np.log(d.probs)
    return _soft(per_class)


def src_global(y, global_dict, epsilon, max_sparsity, n_classes=None):
    """Whole-image sparse classification: minimal class residual wins.

    Scores are negated residuals so the shared argmax convention applies.
    """
    code = omp(global_dict, y, epsilon, max_sparsity)
    residuals = class_residuals(global_dict, y, code, n_classes)
    return _soft(-residuals)


# ---------------------------------------------------------------------------
# Block layouts

# Grid shapes for the uniform block-count presets.
GRID_PRESETS = {8: (4, 2), 12: (4, 3), 20: (5, 4), 30: (6, 5), 42: (7, 6)}

# Perceptual regions as (row0, col0, row1, col1) fractions of the image.
# The paper-style region names map onto generic face geometry; coordinates
# are configuration, not learned.
REGION_FRACTIONS = {
    "eyes": (0.22, 0.14, 0.47, 0.86),
    "left_eye": (0.22, 0.14, 0.47, 0.43),
    "right_eye": (0.22, 0.57, 0.47, 0.86),
    "nose": (0.44, 0.36, 0.69, 0.64),
    "mouth": (0.69, 0.29, 0.94, 0.71),
}

REGION_PRESETS = {3: ("eyes", "nose", "mouth"),
                  5: ("eyes", "nose", "mouth", "left_eye", "right_eye")}


def uniform_grid(height, width, n_rows, n_cols, block_rows=8, block_cols=8):
    """Evenly spaced top-left corners; blocks overlap when the grid is dense."""
    block_rows = min(block_rows, height)
    block_cols = min(block_cols, width)

    def positions(extent, block, count):
        if count == 1:
            return [(extent - block) // 2]
        return [int(round(i * (extent - block) / (count - 1))) for i in range(count)]

    specs = []
    for r in positions(height, block_rows, n_rows):
        for c in positions(width, block_cols, n_cols):
            specs.append(BlockSpec(r, c, block_rows, block_cols))
    return specs


def face_regions(height, width, names):
    """Named perceptual regions scaled to the image dimensions."""
    specs = []
    for name in names:
        r0f, c0f, r1f, c1f = REGION_FRACTIONS[name]
        r0 = int(round(r0f * height))
        c0 = int(round(c0f * width))
        r1 = min(int(round(r1f * height)), height)
        c1 = min(int(round(c1f * width)), width)
        specs.append(BlockSpec(r0, c0, max(r1 - r0, 1), max(c1 - c0, 1)))
    return specs


def block_layout(height, width, count, block_rows=8, block_cols=8):
    """Resolve a block-count preset into concrete block specs.

    Counts 3 and 5 are the perceptual-region presets; other preset counts
    use the uniform grids; anything else falls back to a near-square grid.
    """
    if count in REGION_PRESETS:
        return face_regions(height, width, REGION_PRESETS[count])
    if count in GRID_PRESETS:
        n_rows, n_cols = GRID_PRESETS[count]
    else:
        n_rows = max(int(round(np.sqrt(count))), 1)
        n_cols = max(int(np.ceil(count / n_rows)), 1)
    return uniform_grid(height, width, n_rows, n_cols, block_rows, block_cols)
