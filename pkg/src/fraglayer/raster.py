"""Bilinear resampling on (H, W, C) rasters with half-pixel sample centers."""

from __future__ import annotations

import numpy as np


def _axis_taps(coords: np.ndarray, size: int):
    coords = np.clip(coords, 0.0, size - 1)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, size - 1)
    frac = coords - lo
    return lo, hi, frac


def sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample ``img`` at the grid ``ys x xs`` of pixel-index coordinates.

    Coordinates outside the raster are clamped to the border.
    """
    img = np.asarray(img, dtype=np.float64)
    y0, y1, fy = _axis_taps(np.asarray(ys, dtype=np.float64), img.shape[0])
    x0, x1, fx = _axis_taps(np.asarray(xs, dtype=np.float64), img.shape[1])
    fy = fy[:, None, None]
    rows = img[y0] * (1.0 - fy) + img[y1] * fy
    fx = fx[None, :, None]
    return rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx


def region_coords(start: float, length: float, samples: int) -> np.ndarray:
    """Pixel-index coordinates of ``samples`` evenly spaced centers over a span."""
    step = length / samples
    return start + (np.arange(samples) + 0.5) * step - 0.5


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    return sample_bilinear(img, region_coords(0.0, h, out_h), region_coords(0.0, w, out_w))
