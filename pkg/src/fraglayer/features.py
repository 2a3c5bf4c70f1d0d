"""Initial node representations: type/geometry embeddings and visual crops."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import WINDOW, Window
from .layers import NUM_LAYER_TYPES, LayerType, Rect
from .nn import tensor as T
from .nn.cnn import glorot
from .nn.tensor import Tensor
from .raster import region_coords, sample_bilinear

FUSION_MODES = ("le", "vf", "le+vf")
VISUAL_METHODS = ("crop", "roi")


@dataclass
class EmbeddingParams:
    type_embed: Tensor  # (num types, d_t)
    geom_embed: Tensor  # (4, d_g)

    @classmethod
    def init(cls, rng: np.random.Generator, d_t: int = 32, d_g: int = 32) -> "EmbeddingParams":
        return cls(
            T.parameter(glorot(rng, NUM_LAYER_TYPES, d_t, (NUM_LAYER_TYPES, d_t))),
            T.parameter(glorot(rng, 4, d_g, (4, d_g))),
        )


@dataclass(frozen=True)
class VisualConfig:
    method: str = "crop"
    crop_size: int = 32
    roi_grid: tuple[int, int] = (5, 5)
    roi_input: int = 160  # side of the downscaled patch fed to the backbone in roi mode
    visual_dim: int = 128

    def __post_init__(self):
        if self.method not in VISUAL_METHODS:
            raise ValueError(f"unknown visual method {self.method!r}")
        if self.crop_size <= 0 or min(self.roi_grid) <= 0 or self.roi_input <= 0:
            raise ValueError("crop_size, roi_grid and roi_input must be positive")


def geometry_raw(rect: Rect, window: Window | None = None) -> np.ndarray:
    ox, oy = window.origin if window is not None else (0.0, 0.0)
    return np.array([rect.x - ox, rect.y - oy, rect.w, rect.h], dtype=np.float64) / WINDOW


def encode_geometry(rect: Rect, window: Window | None, geom_embed) -> np.ndarray:
    embed = geom_embed.data if isinstance(geom_embed, Tensor) else np.asarray(geom_embed)
    return geometry_raw(rect, window) @ embed


def encode_type(layer_type: LayerType, params: EmbeddingParams | np.ndarray) -> np.ndarray:
    embed = params.type_embed.data if isinstance(params, EmbeddingParams) else np.asarray(params)
    onehot = np.zeros(NUM_LAYER_TYPES)
    onehot[layer_type.index] = 1.0
    return onehot @ embed


def clip_to_window(rect: Rect, size: int = WINDOW) -> Rect | None:
    """Window-local rect clipped to ``[0, size)^2``; None if nothing remains."""
    x0, y0 = max(rect.x, 0.0), max(rect.y, 0.0)
    x1, y1 = min(rect.x2, float(size)), min(rect.y2, float(size))
    if x1 <= x0 or y1 <= y0:
        return None
    return Rect(x0, y0, x1 - x0, y1 - y0)


def crop_resize(patch: np.ndarray, rect: Rect, size: int = 32) -> np.ndarray:
    """Region of ``patch`` under a window-local ``rect`` resampled to (3, size, size).

    The aspect ratio is not preserved. Values are scaled to [0, 1]; a rect with
    no area left after clipping yields zeros.
    """
    clipped = clip_to_window(rect, patch.shape[0])
    if clipped is None:
        return np.zeros((3, size, size), dtype=np.float32)
    ys = region_coords(clipped.y, clipped.h, size)
    xs = region_coords(clipped.x, clipped.w, size)
    out = sample_bilinear(patch, ys, xs) / 255.0
    return out.transpose(2, 0, 1).astype(np.float32)


def _bin_edges(lo: float, hi: float, cells: int, bins: int) -> list[tuple[int, int]] | None:
    if hi <= 0 or lo >= cells:
        return None
    start = min(max(int(math.floor(lo)), 0), cells - 1)
    end = min(max(int(math.ceil(hi)), start + 1), cells)
    extent = end - start
    # floor/ceil partition: with extent >= 1 no bin is ever empty
    return [
        (start + (k * extent) // bins, start + -(-((k + 1) * extent) // bins))
        for k in range(bins)
    ]


def roi_bins(rect: Rect, map_h: int, map_w: int, stride: float, grid: tuple[int, int] = (5, 5)) -> np.ndarray:
    """Integer cell ranges (gh, gw, 4) of a window-local rect on a feature map.

    Ranges are ``(y0, y1, x0, x1)``, half-open. A rect entirely off the map
    gets all-empty ranges.
    """
    gh, gw = grid
    ys = _bin_edges(rect.y / stride, rect.y2 / stride, map_h, gh)
    xs = _bin_edges(rect.x / stride, rect.x2 / stride, map_w, gw)
    out = np.zeros((gh, gw, 4), dtype=np.int64)
    if ys is None or xs is None:
        return out
    for i, (y0, y1) in enumerate(ys):
        for j, (x0, x1) in enumerate(xs):
            out[i, j] = (y0, y1, x0, x1)
    return out


def roi_maxpool(feature_map, rect: Rect, grid: tuple[int, int] = (5, 5), stride: float = 1.0) -> np.ndarray:
    """Channel-wise max over a ``grid`` of bins covering ``rect`` on the map."""
    fmap = feature_map if isinstance(feature_map, Tensor) else Tensor(np.asarray(feature_map))
    _, hf, wf = fmap.shape
    bins = roi_bins(rect, hf, wf, stride, grid)[None]
    return T.roi_maxpool(fmap, bins).data[0]


def fuse(type_v=None, geom_v=None, visual_v=None, mode: str = "le+vf"):
    """Concatenate (type, geometry, visual) parts as selected by ``mode``.

    Works on 1-D numpy vectors or on (N, d) tensors.
    """
    if mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {mode!r}")
    parts = []
    if mode in ("le", "le+vf"):
        if type_v is None or geom_v is None:
            raise ValueError(f"fusion mode {mode!r} needs type and geometry vectors")
        parts += [type_v, geom_v]
    if mode in ("vf", "le+vf"):
        if visual_v is None:
            raise ValueError(f"fusion mode {mode!r} needs a visual vector")
        parts.append(visual_v)
    if isinstance(parts[0], Tensor):
        return parts[0] if len(parts) == 1 else T.concat(parts, axis=-1)
    return np.concatenate([np.asarray(p) for p in parts], axis=-1)
