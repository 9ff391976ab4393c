"""Synthetic face-like dataset generator.

Each class gets a distinct low-frequency template (a seeded mixture of 2-D
cosine modes shaped by a soft oval falloff); samples vary by a global
illumination gain and additive noise. The point is a dataset whose local
blocks carry class identity, so the whole pipeline can run with no
external downloads.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import GrayImage, save_pgm

N_MODES = 6
GAIN_RANGE = (0.65, 1.0)
NOISE_SIGMA = 0.02


def class_template(height, width, rng):
    """One low-frequency pattern, normalized into [0.15, 0.95]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= max(height - 1, 1)
    xx /= max(width - 1, 1)
    img = np.zeros((height, width))
    for _ in range(N_MODES):
        fy = rng.uniform(0.3, 2.5)
        fx = rng.uniform(0.3, 2.5)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.4, 1.0)
        img += amp * np.cos(2.0 * np.pi * (fy * yy + fx * xx) + phase)
    # Soft oval falloff so templates read as centered faces on dark ground.
    oval = np.exp(-(((yy - 0.5) / 0.45) ** 2 + ((xx - 0.5) / 0.40) ** 2))
    img *= 0.35 + 0.65 * oval
    lo, hi = img.min(), img.max()
    return 0.15 + 0.8 * (img - lo) / (hi - lo)


def sample_from_template(template, rng):
    """Apply per-sample illumination gain and additive noise."""
    gain = rng.uniform(*GAIN_RANGE)
    noisy = gain * template + rng.normal(0.0, NOISE_SIGMA, template.shape)
    return GrayImage(noisy)


def generate_images(n_classes, per_class, height, width, seed):
    """In-memory fixture: (images, labels) grouped by class."""
    images, labels = [], []
    for cls in range(1, n_classes + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, cls]))
        template = class_template(height, width, rng)
        for _ in range(per_class):
            images.append(sample_from_template(template, rng))
            labels.append(cls)
    return images, labels


def generate_dataset(root, n_classes, per_class, height=32, width=28, seed=0):
    """Write the fixture to disk in the class_<id>/<sample>.pgm layout."""
    root = Path(root)
    images, labels = generate_images(n_classes, per_class, height, width, seed)
    counters = {}
    for img, cls in zip(images, labels):
        cls_dir = root / f"class_{cls}"
        cls_dir.mkdir(parents=True, exist_ok=True)
        idx = counters.get(cls, 0)
        counters[cls] = idx + 1
        save_pgm(img, cls_dir / f"sample_{idx:03d}.pgm")
    return root
