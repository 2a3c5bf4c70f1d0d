"""Small convolutional backbone trained from scratch."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

CHANNELS = (16, 32, 64)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def he_conv(rng: np.random.Generator, out_c: int, in_c: int, k: int = 3) -> np.ndarray:
    std = np.sqrt(2.0 / (in_c * k * k))
    return (rng.standard_normal((out_c, in_c, k, k)) * std).astype(np.float32)


class SmallCnn:
    """Three conv/ReLU/maxpool stages and a fully-connected projection.

    In ``crop`` mode the projection consumes the flattened final feature map of
    a ``crop_size`` square input. In ``roi`` mode it consumes a pooled
    ``C x gh x gw`` block instead (see :meth:`features` and :meth:`project`).
    """

    def __init__(self, rng: np.random.Generator, out_dim: int = 128, *, crop_size: int = 32,
                 mode: str = "crop", roi_grid: tuple[int, int] = (5, 5)):
        if mode not in ("crop", "roi"):
            raise ValueError(f"unknown visual mode {mode!r}")
        self.mode = mode
        self.out_dim = out_dim
        self.params: dict[str, Tensor] = {}
        in_c = 3
        for i, out_c in enumerate(CHANNELS):
            self.params[f"conv{i}.w"] = T.parameter(he_conv(rng, out_c, in_c))
            self.params[f"conv{i}.b"] = T.parameter(np.zeros(out_c, np.float32))
            in_c = out_c
        if mode == "crop":
            side = crop_size >> len(CHANNELS)
            if side < 1:
                raise ValueError(f"crop_size {crop_size} too small for {len(CHANNELS)} pooling stages")
            flat = in_c * side * side
        else:
            flat = in_c * roi_grid[0] * roi_grid[1]
        self.params["fc.w"] = T.parameter(glorot(rng, flat, out_dim, (flat, out_dim)))
        self.params["fc.b"] = T.parameter(np.zeros(out_dim, np.float32))

    def features(self, images: Tensor) -> Tensor:
        """Feature map (N, 64, H/8, W/8) of images scaled to [0, 1]."""
        h = T.add(images, -0.5)
        for i in range(len(CHANNELS)):
            h = T.conv2d(h, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"])
            h = T.maxpool2d(T.relu(h))
        return h

    def project(self, block: Tensor) -> Tensor:
        flat = T.reshape(block, (block.shape[0], -1))
        return T.relu(T.linear(flat, self.params["fc.w"], self.params["fc.b"]))

    def __call__(self, crops: Tensor) -> Tensor:
        return self.project(self.features(crops))
