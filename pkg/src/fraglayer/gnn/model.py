"""Fragmented-layer detector: node encoders, GNN stack and classifier head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..features import FUSION_MODES, VISUAL_METHODS, EmbeddingParams, VisualConfig, fuse
from ..nn import tensor as T
from ..nn.cnn import SmallCnn, glorot
from ..nn.tensor import Tensor
from .layers import Arcs, GatLayerParams, GcnLayerParams, gat_layer_forward, gcn_layer_forward

MODELS = ("gat", "gcn", "none")


@dataclass(frozen=True)
class ModelConfig:
    model: str = "gat"
    visual: str = "crop"
    features: str = "le+vf"
    type_dim: int = 32
    geom_dim: int = 32
    visual_dim: int = 128
    hidden: int = 256
    head_dim: int = 64
    gat_heads: tuple[int, ...] = (4, 4, 4, 6)
    gcn_layers: int = 3
    classifier_hidden: int = 128
    crop_size: int = 32
    roi_input: int = 160
    roi_grid: tuple[int, int] = (5, 5)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.visual not in VISUAL_METHODS:
            raise ValueError(f"unknown visual method {self.visual!r}")
        if self.features not in FUSION_MODES:
            raise ValueError(f"unknown feature mode {self.features!r}")

    @property
    def uses_embeddings(self) -> bool:
        return self.features in ("le", "le+vf")

    @property
    def uses_visual(self) -> bool:
        return self.features in ("vf", "le+vf")

    @property
    def init_dim(self) -> int:
        dim = self.type_dim + self.geom_dim if self.uses_embeddings else 0
        return dim + (self.visual_dim if self.uses_visual else 0)

    def visual_config(self) -> VisualConfig | None:
        if not self.uses_visual:
            return None
        return VisualConfig(self.visual, self.crop_size, tuple(self.roi_grid), self.roi_input, self.visual_dim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gat_heads"] = list(self.gat_heads)
        d["roi_grid"] = list(self.roi_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["gat_heads"] = tuple(d["gat_heads"])
        d["roi_grid"] = tuple(d["roi_grid"])
        return cls(**d)


@dataclass
class Forward:
    logits: Tensor
    attention: list[np.ndarray] = field(default_factory=list)


class FragmentDetector:
    """All learned parameters, keyed by stable dotted names."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.embed = EmbeddingParams.init(rng, config.type_dim, config.geom_dim) if config.uses_embeddings else None
        self.cnn = (
            SmallCnn(rng, config.visual_dim, crop_size=config.crop_size, mode=config.visual, roi_grid=config.roi_grid)
            if config.uses_visual
            else None
        )
        self.proj_w = self.proj_b = None
        self.gat: list[GatLayerParams] = []
        self.gcn: list[GcnLayerParams] = []
        if config.model != "none":
            self.proj_w = T.parameter(glorot(rng, config.init_dim, config.hidden, (config.init_dim, config.hidden)))
            self.proj_b = T.parameter(np.zeros(config.hidden, np.float32))
        width = config.hidden
        if config.model == "gat":
            last = len(config.gat_heads) - 1
            for i, heads in enumerate(config.gat_heads):
                combine = "average" if i == last else "concat"
                layer = GatLayerParams.init(rng, width, heads, config.head_dim, combine)
                self.gat.append(layer)
                width = layer.out_dim
        elif config.model == "gcn":
            for i in range(config.gcn_layers):
                out = config.head_dim if i == config.gcn_layers - 1 else config.hidden
                self.gcn.append(GcnLayerParams.init(rng, width, out))
                width = out
        if config.model == "none":
            head_in = config.init_dim
        else:
            head_in = width + (config.visual_dim if config.uses_visual else 0)
        self.head0_w = T.parameter(glorot(rng, head_in, config.classifier_hidden, (head_in, config.classifier_hidden)))
        self.head0_b = T.parameter(np.zeros(config.classifier_hidden, np.float32))
        self.head1_w = T.parameter(glorot(rng, config.classifier_hidden, 2, (config.classifier_hidden, 2)))
        self.head1_b = T.parameter(np.zeros(2, np.float32))

    # ---------------------------------------------------------------- params
    @property
    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.embed is not None:
            out["embed.type"] = self.embed.type_embed
            out["embed.geom"] = self.embed.geom_embed
        if self.cnn is not None:
            out.update({f"cnn.{k}": v for k, v in self.cnn.params.items()})
        if self.proj_w is not None:
            out["proj.w"], out["proj.b"] = self.proj_w, self.proj_b
        for i, layer in enumerate(self.gat):
            out.update({f"gat{i}.{k}": v for k, v in layer.tensors().items()})
        for i, layer in enumerate(self.gcn):
            out.update({f"gcn{i}.{k}": v for k, v in layer.tensors().items()})
        out["head.0.w"], out["head.0.b"] = self.head0_w, self.head0_b
        out["head.1.w"], out["head.1.b"] = self.head1_w, self.head1_b
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.params
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"incompatible parameter set: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"incompatible dims for {name!r}: checkpoint {arr.shape}, model {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def astype(self, dtype) -> "FragmentDetector":
        for p in self.params.values():
            p.data = p.data.astype(dtype)
        return self

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # ---------------------------------------------------------------- forward
    def visual_features(self, sample) -> Tensor | None:
        if self.cnn is None:
            return None
        dtype = self.head0_w.dtype
        if self.config.visual == "crop":
            return self.cnn(Tensor(sample.crops.astype(dtype, copy=False)))
        fmap = self.cnn.features(Tensor(sample.roi_patch.astype(dtype, copy=False)))
        c, h, w = fmap.shape[1:]
        pooled = T.roi_maxpool(T.reshape(fmap, (c, h, w)), sample.roi_bins)
        return self.cnn.project(pooled)

    def node_init(self, sample, visual: Tensor | None) -> Tensor:
        type_v = geom_v = None
        if self.embed is not None:
            dtype = self.embed.geom_embed.dtype
            type_v = T.gather_rows(self.embed.type_embed, sample.types)
            geom_v = T.matmul(Tensor(sample.geometry.astype(dtype, copy=False)), self.embed.geom_embed)
        return fuse(type_v, geom_v, visual, self.config.features)

    def forward(self, sample, *, arcs: Arcs | None = None, keep_attention: bool = False) -> Forward:
        arcs = arcs if arcs is not None else sample.arcs
        visual = self.visual_features(sample)
        init = self.node_init(sample, visual)
        attention: list[np.ndarray] = []
        if self.config.model == "none":
            head_in = init
        else:
            h = T.linear(init, self.proj_w, self.proj_b)
            last = len(self.gat) - 1
            for i, layer in enumerate(self.gat):
                h = gat_layer_forward(arcs, h, layer, activate=i != last,
                                      attention=attention if keep_attention else None)
            for layer in self.gcn:
                h = gcn_layer_forward(arcs, h, layer)
            head_in = h if visual is None else T.concat([h, visual], axis=-1)
        hidden = T.relu(T.linear(head_in, self.head0_w, self.head0_b))
        return Forward(T.linear(hidden, self.head1_w, self.head1_b), attention)

    def __call__(self, sample) -> Tensor:
        return self.forward(sample).logits

    def probabilities(self, sample) -> np.ndarray:
        """P(fragmented) per node, computed without recording a tape."""
        return T.softmax_np(self.forward(sample).logits.data.astype(np.float64))[:, 1]
