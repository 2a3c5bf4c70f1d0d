"""Windowing, containment trees and layout graphs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .layers import Artboard, LayerNode, LayerType, Rect, Screenshot
from .raster import resize

WINDOW = 750

TREE, SIBLING, SELF = "tree", "sibling", "self"


@dataclass(frozen=True, eq=False)
class Window:
    index: int
    layers: tuple[LayerNode, ...]  # rects in scaled artboard coordinates
    patch: np.ndarray | None = None  # (750, 750, 3) uint8
    size: int = WINDOW

    @property
    def origin(self) -> tuple[float, float]:
        return (0.0, float(self.size * self.index))

    @property
    def rect(self) -> Rect:
        ox, oy = self.origin
        return Rect(ox, oy, float(self.size), float(self.size))

    @property
    def members(self) -> list[str]:
        return [n.id for n in self.layers]


def scale_factor(artboard: Artboard) -> float:
    if not artboard.width > 0:
        raise ValueError(f"artboard {artboard.id!r} has non-positive width {artboard.width}")
    return WINDOW / artboard.width


def window_count(artboard: Artboard) -> int:
    scaled_h = artboard.height * scale_factor(artboard)
    return max(1, math.ceil(scaled_h / WINDOW - 1e-9))


def window_index(cy: float, count: int) -> int:
    """Window holding a scaled center y; boundaries go to the lower window.

    Centers above the first or below the last strip (overflowing layers) go to
    the nearest window so every layer lands somewhere.
    """
    return min(max(int(math.floor(cy / WINDOW)), 0), count - 1)


def scaled_layers(artboard: Artboard) -> list[LayerNode]:
    s = scale_factor(artboard)
    return [LayerNode(n.id, n.name, n.type, n.rect.scaled(s), n.z) for n in artboard.layers]


def assign_windows(artboard: Artboard) -> list[Window]:
    """Geometry-only windowing (no raster)."""
    count = window_count(artboard)
    buckets: list[list[LayerNode]] = [[] for _ in range(count)]
    for node in scaled_layers(artboard):
        buckets[window_index(node.rect.center()[1], count)].append(node)
    return [Window(i, tuple(b)) for i, b in enumerate(buckets)]


def scale_raster(artboard: Artboard, screenshot: Screenshot) -> np.ndarray:
    """Screenshot resized to width 750 and padded with black to whole windows."""
    s = scale_factor(artboard)
    count = window_count(artboard)
    out_h = max(1, round(screenshot.height * s))
    scaled = resize(screenshot.pixels, out_h, WINDOW)
    canvas = np.zeros((count * WINDOW, WINDOW, 3), dtype=np.uint8)
    rows = min(out_h, canvas.shape[0])
    canvas[:rows] = np.clip(np.rint(scaled[:rows]), 0, 255).astype(np.uint8)
    return canvas


def scale_and_window(artboard: Artboard, screenshot: Screenshot) -> list[Window]:
    canvas = scale_raster(artboard, screenshot)
    return [
        Window(w.index, w.layers, canvas[w.index * WINDOW:(w.index + 1) * WINDOW])
        for w in assign_windows(artboard)
    ]


# ---------------------------------------------------------------- tree

@dataclass
class ContainmentTree:
    """Node 0 is the virtual canvas root; node i > 0 is ``layers[i - 1]``."""

    root_rect: Rect
    layers: tuple[LayerNode, ...]
    parent: list[int]  # parent[0] == -1
    children: list[list[int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.parent)

    def rect(self, node: int) -> Rect:
        return self.root_rect if node == 0 else self.layers[node - 1].rect

    def layer_id(self, node: int) -> str | None:
        return None if node == 0 else self.layers[node - 1].id

    def layer_type(self, node: int) -> LayerType:
        return LayerType.CANVAS if node == 0 else self.layers[node - 1].type

    def node_of(self, layer_id: str) -> int:
        for i, n in enumerate(self.layers):
            if n.id == layer_id:
                return i + 1
        raise KeyError(layer_id)

    def parent_map(self) -> dict[str, str | None]:
        return {self.layer_id(i): self.layer_id(self.parent[i]) for i in range(1, len(self))}

    def preorder(self) -> list[int]:
        out, stack = [], [0]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(self.children[node]))
        return out


def _can_nest(outer: LayerNode, inner: LayerNode) -> bool:
    """Whether ``outer`` may be an ancestor of ``inner`` (identical rects: lower z wins)."""
    if not outer.rect.contains(inner.rect):
        return False
    if outer.rect == inner.rect:
        return outer.z < inner.z
    return True


def _rank(node: LayerNode) -> tuple[float, int]:
    # smaller area is the tighter parent; among equals, the later layer
    return (node.rect.area, -node.z)


def build_containment_tree(
    window: Window | Rect,
    layers: Sequence[LayerNode] | None = None,
    order: Iterable[int] | None = None,
) -> ContainmentTree:
    """Insert layers one at a time, keeping every node under its tightest container.

    Each arriving layer is attached below the smallest already-inserted layer
    that contains it (or the root), and any inserted layer for which the
    newcomer is a tighter container is moved beneath it. The final parent of
    every layer is therefore the minimum-area container among all layers,
    independent of insertion ``order`` (default: z order).
    """
    if isinstance(window, Window):
        root_rect = window.rect
        layers = window.layers if layers is None else layers
    else:
        root_rect = window
    layers = tuple(sorted(layers or (), key=lambda n: n.z))
    n = len(layers)
    parent = [-1] + [0] * n
    inserted: list[int] = []
    for i in (range(n) if order is None else order):
        node = layers[i]
        best = None
        for j in inserted:
            other = layers[j]
            if _can_nest(other, node) and (best is None or _rank(other) < _rank(layers[best])):
                best = j
        parent[i + 1] = 0 if best is None else best + 1
        for j in inserted:
            other = layers[j]
            if not _can_nest(node, other):
                continue
            current = parent[j + 1]
            if current == 0 or _rank(node) < _rank(layers[current - 1]):
                parent[j + 1] = i + 1
        inserted.append(i)
    children: list[list[int]] = [[] for _ in range(n + 1)]
    for child in range(1, n + 1):
        children[parent[child]].append(child)
    return ContainmentTree(root_rect, layers, parent, children)


# ---------------------------------------------------------------- graph

@dataclass
class LayoutGraph:
    layer_ids: list[str | None]  # index 0 is the root
    src: np.ndarray
    dst: np.ndarray
    kinds: list[str]

    @property
    def num_nodes(self) -> int:
        return len(self.layer_ids)

    @property
    def num_arcs(self) -> int:
        return len(self.kinds)

    def neighborhoods(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {i: [] for i in range(self.num_nodes)}
        for s, d in zip(self.src.tolist(), self.dst.tolist()):
            out[d].append(s)
        return out

    def dump(self) -> dict:
        return {
            "nodes": [
                {"idx": i, "layer_id": lid, "kind": "root" if i == 0 else "layer"}
                for i, lid in enumerate(self.layer_ids)
            ],
            "arcs": [
                {"src": int(s), "dst": int(d), "kind": k}
                for s, d, k in zip(self.src.tolist(), self.dst.tolist(), self.kinds)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.dump(), indent=1)


def build_graph(tree: ContainmentTree) -> LayoutGraph:
    """Tree arcs parent->child, a complete digraph per sibling set, and self-loops."""
    src: list[int] = []
    dst: list[int] = []
    kinds: list[str] = []
    for node in range(len(tree)):
        for child in tree.children[node]:
            src.append(node)
            dst.append(child)
            kinds.append(TREE)
    for node in range(len(tree)):
        sibs = tree.children[node]
        for a in sibs:
            for b in sibs:
                if a != b:
                    src.append(a)
                    dst.append(b)
                    kinds.append(SIBLING)
    for node in range(len(tree)):
        src.append(node)
        dst.append(node)
        kinds.append(SELF)
    return LayoutGraph(
        [tree.layer_id(i) for i in range(len(tree))],
        np.asarray(src, dtype=np.int64),
        np.asarray(dst, dtype=np.int64),
        kinds,
    )
