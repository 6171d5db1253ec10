"""Relevance maps and prototypes as portable pixel images.

Positive relevance ramps white to purple, negative white to blue, zero is
white. Output is binary PPM (P6) for color and PGM (P5) for grayscale,
maxval 255, no comment lines, so identical inputs give identical bytes.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, IoError, ShapeError
from .relprop import RelevanceMap
from .tensor import as_tensor, require_finite

PURPLE = (160, 32, 240)
BLUE = (0, 0, 255)
WHITE = (255, 255, 255)


@dataclass(frozen=True)
class ColorScale:
    positive_end: tuple[int, int, int] = PURPLE
    negative_end: tuple[int, int, int] = BLUE
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError(f"gamma must be > 0, got {self.gamma}")


def normalize_relevance(m) -> np.ndarray:
    """Scale to [-1, 1] by the maximum magnitude; an all-zero map stays zero."""
    values = m.values if isinstance(m, RelevanceMap) else as_tensor(m)
    require_finite(values, "relevance values")
    peak = np.abs(values).max()
    if peak == 0.0:
        return np.zeros_like(values)
    return values / peak


def _plane(values) -> np.ndarray:
    values = as_tensor(values)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    if values.ndim != 2:
        raise ShapeError(
            f"image rendering needs a rows x cols plane, got shape {values.shape}"
        )
    return values


def _colorize(values: np.ndarray, scale: ColorScale) -> np.ndarray:
    t = np.abs(values) ** scale.gamma
    rgb = np.empty(values.shape + (3,))
    pos = values >= 0.0
    for c in range(3):
        ramp = np.where(pos, scale.positive_end[c], scale.negative_end[c])
        rgb[:, :, c] = WHITE[c] + t * (ramp - WHITE[c])
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def _grayize(values: np.ndarray) -> np.ndarray:
    # [-1, 1] mapped linearly onto [0, 255]
    return np.clip(np.rint((values + 1.0) * 127.5), 0, 255).astype(np.uint8)


def to_image(normalized, scale: ColorScale, path) -> None:
    """Write a [-1, 1] value plane as .ppm (color ramp) or .pgm (gray)."""
    values = _plane(normalized)
    if np.abs(values).max() > 1.0 + 1e-9:
        raise InputError("values must lie in [-1, 1]; normalize first")
    path = Path(path)
    h, w = values.shape
    if path.suffix == ".ppm":
        header = f"P6\n{w} {h}\n255\n".encode()
        payload = _colorize(values, scale).tobytes()
    elif path.suffix == ".pgm":
        header = f"P5\n{w} {h}\n255\n".encode()
        payload = _grayize(values).tobytes()
    else:
        raise InputError(f"unsupported image suffix '{path.suffix}' (use .ppm or .pgm)")
    try:
        path.write_bytes(header + payload)
    except OSError as exc:
        raise IoError(f"cannot write image '{path}': {exc}") from None


def render_relevance(m, path, scale: ColorScale = ColorScale()) -> None:
    """Normalize and write a relevance map, summing channels if present."""
    values = m.values if isinstance(m, RelevanceMap) else as_tensor(m)
    if values.ndim == 3 and values.shape[2] > 1:
        values = values.sum(axis=2)
    to_image(normalize_relevance(values), scale, path)
