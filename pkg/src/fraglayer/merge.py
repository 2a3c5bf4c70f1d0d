"""Clustering of detected fragmented layers into merge groups."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graph import ContainmentTree
from .layers import Rect


@dataclass(frozen=True)
class MergeConfig:
    tau: float = 40.0  # center distance threshold, px at 750-wide scale

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass
class MergeGroup:
    id: str
    members: list[str]
    bounds: Rect


@dataclass
class MergeResult:
    groups: list[MergeGroup] = field(default_factory=list)
    singletons: list[str] = field(default_factory=list)

    def partition(self) -> set[frozenset[str]]:
        return {frozenset(g.members) for g in self.groups}


def group_bounds(rects: Iterable[Rect]) -> Rect:
    rects = list(rects)
    if not rects:
        raise ValueError("group_bounds of an empty group")
    x0 = min(r.x for r in rects)
    y0 = min(r.y for r in rects)
    x1 = max(r.x2 for r in rects)
    y1 = max(r.y2 for r in rects)
    return Rect(x0, y0, x1 - x0, y1 - y0)


def merge_adjacency(tree: ContainmentTree, nodes: list[int], tau: float) -> np.ndarray:
    """Boolean adjacency over ``nodes`` (tree node indices, all positive)."""
    k = len(nodes)
    adj = np.zeros((k, k), dtype=bool)
    pos = {node: i for i, node in enumerate(nodes)}
    centers = [tree.rect(n).center() for n in nodes]
    # close centers
    for i in range(k):
        for j in range(i + 1, k):
            if math.dist(centers[i], centers[j]) < tau:
                adj[i, j] = adj[j, i] = True
    # positive containers absorb their positive children, walking top-down
    for node in tree.preorder():
        if node not in pos or not tree.children[node]:
            continue
        for child in tree.children[node]:
            if child in pos:
                adj[pos[node], pos[child]] = adj[pos[child], pos[node]] = True
    return adj


def _components(adj: np.ndarray) -> list[list[int]]:
    seen = np.zeros(len(adj), dtype=bool)
    comps = []
    for start in range(len(adj)):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in np.nonzero(adj[v] & ~seen)[0]:
                seen[u] = True
                stack.append(int(u))
        comps.append(sorted(comp))
    return comps


def merge_fragments(tree: ContainmentTree, positives: Iterable[str], config: MergeConfig = MergeConfig()) -> MergeResult:
    positives = set(positives)
    nodes = [i for i in range(1, len(tree)) if tree.layer_id(i) in positives]
    adj = merge_adjacency(tree, nodes, config.tau)
    result = MergeResult()
    for comp in _components(adj):
        members = [nodes[i] for i in comp]
        ids = [tree.layer_id(n) for n in members]
        if len(members) == 1:
            result.singletons.extend(ids)
            continue
        bounds = group_bounds(tree.rect(n) for n in members)
        result.groups.append(MergeGroup(f"g{len(result.groups)}", ids, bounds))
    return result
