"""Per-window graph samples and the artboard-level split."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..features import VisualConfig, crop_resize, geometry_raw, roi_bins
from ..graph import (
    WINDOW,
    ContainmentTree,
    LayoutGraph,
    Window,
    assign_windows,
    build_containment_tree,
    build_graph,
    scale_and_window,
)
from ..layers import Artboard, Screenshot, load_screenshot, parse_artboard
from ..raster import resize
from .layers import Arcs

FEATURE_STRIDE = 8  # three 2x2 pooling stages in the backbone


@dataclass
class GraphSample:
    artboard_id: str
    window: int
    tree: ContainmentTree
    graph: LayoutGraph
    types: np.ndarray  # (N,) layer type indices, node 0 = canvas root
    geometry: np.ndarray  # (N, 4) window-normalized x, y, w, h
    labels: np.ndarray  # (N,) 1 = fragmented
    mask: np.ndarray  # (N,) True for labeled layer nodes
    crops: np.ndarray | None = None  # (N, 3, S, S)
    roi_patch: np.ndarray | None = None  # (1, 3, R, R)
    roi_bins: np.ndarray | None = None  # (N, gh, gw, 4)

    @property
    def arcs(self) -> Arcs:
        return Arcs.of(self.graph)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def layer_ids(self) -> list[str | None]:
        return self.graph.layer_ids


def window_sample(artboard: Artboard, window: Window, visual: VisualConfig | None,
                  tree: ContainmentTree | None = None) -> GraphSample:
    tree = tree or build_containment_tree(window)
    graph = build_graph(tree)
    n = len(tree)
    local = [tree.rect(i).translated(-window.origin[0], -window.origin[1]) for i in range(n)]
    types = np.array([tree.layer_type(i).index for i in range(n)], dtype=np.int64)
    geometry = np.stack([geometry_raw(r) for r in local]).astype(np.float32)
    labels = np.zeros(n, dtype=np.int64)
    mask = np.zeros(n, dtype=bool)
    if artboard.labels:
        for i in range(1, n):
            label = artboard.labels.get(tree.layer_id(i))
            if label is not None:
                labels[i] = int(label.fragmented)
                mask[i] = True
    sample = GraphSample(artboard.id, window.index, tree, graph, types, geometry, labels, mask)
    if visual is not None and window.patch is not None:
        if visual.method == "crop":
            sample.crops = np.stack([crop_resize(window.patch, r, visual.crop_size) for r in local])
        else:
            side = visual.roi_input
            small = resize(window.patch, side, side) / 255.0
            sample.roi_patch = small.transpose(2, 0, 1)[None].astype(np.float32)
            cells = side // FEATURE_STRIDE
            stride = WINDOW / cells
            sample.roi_bins = np.stack([roi_bins(r, cells, cells, stride, visual.roi_grid) for r in local])
    return sample


def artboard_samples(artboard: Artboard, screenshot: Screenshot | None,
                     visual: VisualConfig | None) -> list[GraphSample]:
    """One sample per non-empty window of an artboard."""
    windows = assign_windows(artboard) if screenshot is None else scale_and_window(artboard, screenshot)
    return [window_sample(artboard, w, visual) for w in windows if w.layers]


def dataset_stems(data_dir: str | Path) -> list[str]:
    data_dir = Path(data_dir)
    index = data_dir / "dataset.json"
    if index.exists():
        return [entry["stem"] for entry in json.loads(index.read_text())["artboards"]]
    return sorted(p.stem for p in data_dir.glob("*.json") if p.name not in ("dataset.json", "run_manifest.json"))


def load_artboard(data_dir: str | Path, stem: str, with_screenshot: bool = True) -> tuple[Artboard, Screenshot | None]:
    data_dir = Path(data_dir)
    board = parse_artboard((data_dir / f"{stem}.json").read_bytes())
    shot = None
    if with_screenshot:
        shot = load_screenshot((data_dir / f"{stem}.ppm").read_bytes(), board)
    return board, shot


def load_samples(data_dir: str | Path, visual: VisualConfig | None, stems: Sequence[str] | None = None) -> list[GraphSample]:
    out = []
    for stem in stems if stems is not None else dataset_stems(data_dir):
        board, shot = load_artboard(data_dir, stem, with_screenshot=visual is not None)
        out.extend(artboard_samples(board, shot, visual))
    return out


def split_by_artboard(artboard_ids: Sequence[str], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> dict[str, list[str]]:
    """Shuffle distinct artboard ids with ``seed`` and cut train/val/test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    ids = sorted(set(artboard_ids))
    if len(ids) < 3:
        raise ValueError(f"need at least 3 artboards to split, got {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_val = max(1, round(ratios[1] * len(ids)))
    n_test = max(1, round(ratios[2] * len(ids)))
    n_train = len(ids) - n_val - n_test
    if n_train < 1:
        raise ValueError("split leaves no training artboards")
    return {
        "train": shuffled[:n_train],
        "val": shuffled[n_train:n_train + n_val],
        "test": shuffled[n_train + n_val:],
    }


def partition_samples(samples: Sequence[GraphSample], split: dict[str, list[str]]) -> dict[str, list[GraphSample]]:
    where = {aid: name for name, ids in split.items() for aid in ids}
    out: dict[str, list[GraphSample]] = {name: [] for name in split}
    for s in samples:
        out[where[s.artboard_id]].append(s)
    return out



def dataset_split(data_dir: str | Path, seed: int = 0, ratios=(0.8, 0.1, 0.1)) -> dict[str, list[str]]:
    """Stems per split: the generator's hints when every artboard carries one, else a seeded split."""
    data_dir = Path(data_dir)
    index = data_dir / "dataset.json"
    if index.exists():
        entries = json.loads(index.read_text())["artboards"]
        if entries and all("split" in e for e in entries):
            out: dict[str, list[str]] = {"train": [], "val": [], "test": []}
            for e in entries:
                out[e["split"]].append(e["stem"])
            return out
    stems = dataset_stems(data_dir)
    return split_by_artboard(stems, ratios, seed)
