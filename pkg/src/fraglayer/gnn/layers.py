"""Graph attention and graph convolution layers over arc lists."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import tensor as T
from ..nn.cnn import glorot
from ..nn.tensor import Tensor


@dataclass
class Arcs:
    """Arc list of a graph; ``dst`` defines each node's in-neighborhood."""

    src: np.ndarray
    dst: np.ndarray
    num_nodes: int

    @classmethod
    def of(cls, graph) -> "Arcs":
        return cls(np.asarray(graph.src), np.asarray(graph.dst), graph.num_nodes)


@dataclass
class GatLayerParams:
    weight: Tensor  # (F, heads * F')
    attn: Tensor  # (heads, 2 * F'): destination half first, then source half
    skip_w: Tensor  # (F, out)
    skip_b: Tensor  # (out,)
    heads: int
    head_dim: int
    combine: str = "concat"

    @property
    def out_dim(self) -> int:
        return self.heads * self.head_dim if self.combine == "concat" else self.head_dim

    @classmethod
    def init(cls, rng, in_dim: int, heads: int, head_dim: int, combine: str = "concat") -> "GatLayerParams":
        if combine not in ("concat", "average"):
            raise ValueError(f"unknown head combination {combine!r}")
        out = heads * head_dim if combine == "concat" else head_dim
        return cls(
            T.parameter(glorot(rng, in_dim, head_dim, (in_dim, heads * head_dim))),
            T.parameter(glorot(rng, 2 * head_dim, 1, (heads, 2 * head_dim))),
            T.parameter(glorot(rng, in_dim, out, (in_dim, out))),
            T.parameter(np.zeros(out, np.float32)),
            heads,
            head_dim,
            combine,
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"w": self.weight, "attn": self.attn, "skip.w": self.skip_w, "skip.b": self.skip_b}


def gat_layer_forward(arcs: Arcs, states: Tensor, params: GatLayerParams, *, activate: bool = True,
                      slope: float = 0.2, attention: list | None = None) -> Tensor:
    """One multi-head attention layer with a linear skip from its input.

    Per head, arc j->i scores ``LeakyReLU(a . [W h_i || W h_j])``; scores are
    softmax-normalized over the in-arcs of i, and node i takes
    ``LeakyReLU(sum_j alpha_ij W h_j)``. Heads are concatenated or averaged,
    the skip projection of ``states`` is added, and ELU follows if ``activate``.
    If ``attention`` is a list, the (E, heads) coefficients are appended to it.
    """
    n, f = states.shape
    if f != params.weight.shape[0]:
        raise T.ShapeError(f"gat layer expects {params.weight.shape[0]} input features, got {f}")
    h, fp = params.heads, params.head_dim
    z = T.reshape(T.matmul(states, params.weight), (n, h, fp))
    a_dst = T.slice_(params.attn, (slice(None), slice(0, fp)))
    a_src = T.slice_(params.attn, (slice(None), slice(fp, 2 * fp)))
    s_dst = T.sum_(T.mul(z, a_dst), axis=-1)  # (n, h)
    s_src = T.sum_(T.mul(z, a_src), axis=-1)
    scores = T.leaky_relu(T.add(T.gather_rows(s_dst, arcs.dst), T.gather_rows(s_src, arcs.src)), slope)
    alpha = T.segment_softmax(scores, arcs.dst, n)  # (e, h)
    if attention is not None:
        attention.append(alpha.data)
    e = len(arcs.dst)
    messages = T.mul(T.gather_rows(z, arcs.src), T.reshape(alpha, (e, h, 1)))
    updated = T.leaky_relu(T.segment_sum(messages, arcs.dst, n), slope)
    if params.combine == "concat":
        combined = T.reshape(updated, (n, h * fp))
    else:
        combined = T.mean(updated, axis=1)
    out = T.add(combined, T.linear(states, params.skip_w, params.skip_b))
    return T.elu(out) if activate else out


@dataclass
class GcnLayerParams:
    weight: Tensor
    bias: Tensor
    skip_w: Tensor
    skip_b: Tensor

    @classmethod
    def init(cls, rng, in_dim: int, out_dim: int) -> "GcnLayerParams":
        return cls(
            T.parameter(glorot(rng, in_dim, out_dim, (in_dim, out_dim))),
            T.parameter(np.zeros(out_dim, np.float32)),
            T.parameter(glorot(rng, in_dim, out_dim, (in_dim, out_dim))),
            T.parameter(np.zeros(out_dim, np.float32)),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"w": self.weight, "b": self.bias, "skip.w": self.skip_w, "skip.b": self.skip_b}


def gcn_layer_forward(arcs: Arcs, states: Tensor, params: GcnLayerParams) -> Tensor:
    """Mean over in-neighbors, then linear + ReLU, plus the skip projection."""
    agg = T.segment_mean(T.gather_rows(states, arcs.src), arcs.dst, arcs.num_nodes)
    out = T.relu(T.linear(agg, params.weight, params.bias))
    return T.add(out, T.linear(states, params.skip_w, params.skip_b))
