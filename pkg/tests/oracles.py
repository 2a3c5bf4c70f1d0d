"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import math

import numpy as np

from fraglayer.layers import LayerNode, LayerType, Rect

KINDS = [t for t in LayerType if t is not LayerType.CANVAS]


def random_layers(rng: np.random.Generator, n: int, size: float = 750.0, origin_y: float = 0.0) -> list[LayerNode]:
    """Rects with plenty of nesting, shared edges and exact duplicates."""
    rects: list[Rect] = []
    for _ in range(n):
        roll = rng.random()
        if rects and roll < 0.45:
            outer = rects[rng.integers(len(rects))]
            w = float(rng.integers(0, int(outer.w) + 1))
            h = float(rng.integers(0, int(outer.h) + 1))
            x = outer.x + float(rng.integers(0, int(outer.w - w) + 1))
            y = outer.y + float(rng.integers(0, int(outer.h - h) + 1))
            rect = Rect(x, y, w, h)
        elif rects and roll < 0.55:
            rect = rects[rng.integers(len(rects))]
        else:
            w, h = float(rng.integers(1, int(size) // 2)), float(rng.integers(1, int(size) // 2))
            x = float(rng.integers(0, int(size - w)))
            y = origin_y + float(rng.integers(0, int(size - h)))
            rect = Rect(x, y, w, h)
        rects.append(rect)
    return [LayerNode(f"L{i}", f"L{i}", KINDS[rng.integers(len(KINDS))], r, i) for i, r in enumerate(rects)]


def inclusive_contains(a: Rect, b: Rect) -> bool:
    return a.x <= b.x and a.y <= b.y and a.x + a.w >= b.x + b.w and a.y + a.h >= b.y + b.h


def brute_force_parents(layers: list[LayerNode]) -> dict[str, str | None]:
    """Parent = minimum-area layer containing the child; root (None) if none.

    Ties: of two identical rects the lower z is the ancestor; among different
    containers of equal area the later layer wins.
    """
    out = {}
    for child in layers:
        best = None
        for cand in layers:
            if cand is child or not inclusive_contains(cand.rect, child.rect):
                continue
            if cand.rect == child.rect and cand.z > child.z:
                continue
            key = (cand.rect.w * cand.rect.h, -cand.z)
            if best is None or key < best[0]:
                best = (key, cand.id)
        out[child.id] = None if best is None else best[1]
    return out


def arc_tally(parents: dict[str, str | None]) -> int:
    """Closed-form arc count: tree arcs + sibling pairs + one self-loop per node."""
    groups: dict[str | None, int] = {}
    for p in parents.values():
        groups[p] = groups.get(p, 0) + 1
    nodes = len(parents) + 1
    return len(parents) + sum(k * (k - 1) for k in groups.values()) + nodes


class UnionFind:
    def __init__(self, items):
        self.up = {i: i for i in items}

    def find(self, a):
        while self.up[a] != a:
            self.up[a] = self.up[self.up[a]]
            a = self.up[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.up[max(ra, rb)] = min(ra, rb)

    def classes(self) -> set[frozenset]:
        out: dict = {}
        for i in self.up:
            out.setdefault(self.find(i), set()).add(i)
        return {frozenset(c) for c in out.values()}


def union_find_merge(rects: dict[str, Rect], parents: dict[str, str | None], positives: set[str], tau: float):
    """Groups (size >= 2) and singletons from the literal adjacency of the merge rules."""
    pos = sorted(positives)
    uf = UnionFind(pos)
    for i, a in enumerate(pos):
        ca = (rects[a].x + rects[a].w / 2, rects[a].y + rects[a].h / 2)
        for b in pos[i + 1:]:
            cb = (rects[b].x + rects[b].w / 2, rects[b].y + rects[b].h / 2)
            if math.hypot(ca[0] - cb[0], ca[1] - cb[1]) < tau:
                uf.union(a, b)
    for child, parent in parents.items():
        if child in positives and parent in positives:
            uf.union(child, parent)
    classes = uf.classes()
    groups = {c for c in classes if len(c) >= 2}
    singletons = {next(iter(c)) for c in classes if len(c) == 1}
    return groups, singletons


def dense_gat_layer(states, weight, attn, skip_w, skip_b, heads, head_dim, combine, neighbors, activate=True,
                    slope=0.2):
    """Loop-by-loop evaluation of one attention layer; ``neighbors[i]`` lists sources j of arcs j->i."""
    lrelu = lambda v: v if v > 0 else slope * v
    n = states.shape[0]
    per_head = np.zeros((heads, n, head_dim))
    for k in range(heads):
        wk = weight[:, k * head_dim:(k + 1) * head_dim]
        a_dst, a_src = attn[k, :head_dim], attn[k, head_dim:]
        for i in range(n):
            wh_i = states[i] @ wk
            scores = [lrelu(float(a_dst @ wh_i + a_src @ (states[j] @ wk))) for j in neighbors[i]]
            top = max(scores)
            weights = [math.exp(s - top) for s in scores]
            total = sum(weights)
            acc = np.zeros(head_dim)
            for wgt, j in zip(weights, neighbors[i]):
                acc += (wgt / total) * (states[j] @ wk)
            per_head[k, i] = [lrelu(v) for v in acc]
    if combine == "concat":
        out = np.concatenate(list(per_head), axis=1)
    else:
        out = per_head.mean(axis=0)
    out = out + states @ skip_w + skip_b
    if activate:
        out = np.where(out > 0, out, np.expm1(np.minimum(out, 0)))
    return out


def bilinear_at(img: np.ndarray, y: float, x: float) -> np.ndarray:
    """Textbook bilinear interpolation with edge clamping, one point at a time."""
    h, w = img.shape[:2]
    y = min(max(y, 0.0), h - 1.0)
    x = min(max(x, 0.0), w - 1.0)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def random_merge_instance(rng: np.random.Generator, max_layers: int = 30):
    """(tree, positives, tau) with clustered layers so both merge rules fire."""
    from fraglayer.graph import build_containment_tree

    n = int(rng.integers(0, max_layers + 1))
    layers = random_layers(rng, n)
    tree = build_containment_tree(Rect(0, 0, 750, 750), layers)
    rate = rng.uniform(0.2, 0.9)
    positives = {node.id for node in layers if rng.random() < rate}
    tau = float(rng.uniform(1, 150))
    return tree, positives, tau
