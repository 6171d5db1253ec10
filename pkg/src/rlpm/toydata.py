"""Synthetic image datasets with known ground truth.

The blob task puts a bright Gaussian bump on a noisy background (class 1)
or leaves the background empty (class 0); a classifier that is right for
the right reasons must concentrate relevance on the bump. The square task
is the whole-image analog: class counts how strongly a bright square
patch stands out anywhere in a larger image.
"""
from __future__ import annotations

import numpy as np

from .errors import InputError


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gaussian_bump(shape, center, sigma: float) -> np.ndarray:
    h, w = shape
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    d2 = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def make_blob_dataset(
    n: int,
    seed=0,
    *,
    shape=(16, 16),
    noise: float = 0.08,
    sigma: float = 2.0,
    amplitude: float = 1.0,
):
    """``n`` single-channel images, half with a bump (label 1), half without.

    Returns a list of (image, label) with images shaped rows x cols x 1 in
    roughly [0, 1].
    """
    if n < 2:
        raise InputError("need at least two examples")
    rng = _rng(seed)
    h, w = shape
    data = []
    for i in range(n):
        label = i % 2
        img = rng.uniform(0.0, noise, size=(h, w))
        if label == 1:
            center = (rng.integers(3, h - 3), rng.integers(3, w - 3))
            img = img + amplitude * gaussian_bump((h, w), center, sigma)
        data.append((np.clip(img, 0.0, 1.0)[:, :, None], label))
    return data


def make_square_dataset(
    n: int,
    seed=0,
    *,
    image: int = 24,
    square: int = 6,
    levels=(0.0, 0.5, 1.0),
):
    """Whole-image task: label k puts a square of brightness ``levels[k]``
    at a random position (label 0 = background only)."""
    if n < len(levels):
        raise InputError(f"need at least {len(levels)} examples")
    rng = _rng(seed)
    data = []
    for i in range(n):
        label = i % len(levels)
        img = rng.uniform(0.0, 0.05, size=(image, image))
        if levels[label] > 0:
            r = int(rng.integers(0, image - square))
            c = int(rng.integers(0, image - square))
            img[r : r + square, c : c + square] += levels[label]
        data.append((np.clip(img, 0.0, 1.0)[:, :, None], label))
    return data
