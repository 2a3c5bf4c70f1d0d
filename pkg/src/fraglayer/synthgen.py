"""Seeded generator of labeled synthetic artboards and their screenshots.

Three fragmented-pattern families are produced (icons, decorations, background
patterns) among ordinary layers. Drawing attributes travel in layer names,
e.g. ``oval#rgb(200,40,40)``; the detector never reads them.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .layers import Artboard, Label, LayerNode, LayerType, Rect, Screenshot, encode_ppm, serialize_artboard
from .nn.checkpoint import atomic_write

PATTERNS = ("icon", "decoration", "background")
BOARD_WIDTH = 375
BOARD_HEIGHTS = (667, 740, 812)
BAND = 375  # artboard px per 750-px window at the fixed board width
MARGIN = 24  # > tau/2 so distinct patterns never fall within merge distance

_RGB = re.compile(r"rgb\((\d+),(\d+),(\d+)\)")


@dataclass(frozen=True)
class GenConfig:
    n_artboards: int = 10
    seed: int = 0
    mix: tuple[float, float, float] = (0.4, 0.3, 0.3)  # icon, decoration, background
    pattern_rate: float = 0.22  # chance that a block is a fragmented pattern
    layers: tuple[int, int] = (12, 28)
    noise: float = 1.0

    def __post_init__(self):
        if abs(sum(self.mix) - 1.0) > 1e-9:
            raise ValueError(f"pattern mix must sum to 1, got {self.mix}")
        if not self.layers[0] <= self.layers[1]:
            raise ValueError(f"empty layers range {self.layers}")
        if self.n_artboards < 0:
            raise ValueError("n_artboards must be non-negative")


@dataclass
class _Item:
    type: LayerType
    rect: tuple[int, int, int, int]
    name: str
    fragmented: bool = False
    group: str | None = None


def _rgb(c) -> str:
    return "rgb({},{},{})".format(*(int(v) for v in c))


class _Builder:
    def __init__(self, rng: np.random.Generator, config: GenConfig):
        self.rng = rng
        self.config = config
        self.items: list[_Item] = []
        self.groups = 0

    def color(self, lo: int = 0, hi: int = 256) -> tuple[int, int, int]:
        return tuple(int(v) for v in self.rng.integers(lo, hi, size=3))

    def jitter(self, c) -> tuple[int, int, int]:
        delta = self.rng.integers(-8, 9, size=3) * self.config.noise
        return tuple(int(np.clip(v + d, 0, 255)) for v, d in zip(c, delta))

    def add(self, ltype: LayerType, rect, color, *, second=None, fragmented=False, group=None) -> None:
        name = f"{ltype.value}#{_rgb(color)}"
        if second is not None:
            name += f"#{_rgb(second)}"
        self.items.append(_Item(ltype, tuple(int(v) for v in rect), name, fragmented, group))

    def new_group(self, kind: str) -> str:
        self.groups += 1
        return f"{kind}-{self.groups}"

    # ------------------------------------------------------------ patterns
    def icon(self, x, y, w, h) -> None:
        side = int(min(w, h, self.rng.integers(28, 49)))
        cx = x + int(self.rng.integers(0, w - side + 1))
        cy = y + int(self.rng.integers(0, h - side + 1))
        group = self.new_group("icon")
        ctype = LayerType.RECTANGLE if self.rng.random() < 0.7 else LayerType.OVAL
        self.add(ctype, (cx, cy, side, side), self.color(190, 256), fragmented=True, group=group)
        base = self.color(0, 200)
        for _ in range(int(self.rng.integers(3, 9))):
            s = int(self.rng.integers(6, max(7, int(side * 0.6))))
            sx = cx + int(self.rng.integers(1, max(2, side - s)))
            sy = cy + int(self.rng.integers(1, max(2, side - s)))
            sx, sy = min(sx, cx + side - s), min(sy, cy + side - s)
            ltype = [LayerType.OVAL, LayerType.PATH, LayerType.RECTANGLE][int(self.rng.integers(0, 3))]
            self.add(ltype, (sx, sy, s, s), self.jitter(base), fragmented=True, group=group)

    def decoration(self, x, y, w, h) -> None:
        count = int(self.rng.integers(2, 6))
        size = int(self.rng.integers(6, 13))
        step = size + int(self.rng.integers(1, 5))  # centers stay < 20 px apart
        if step * count > w:
            count = max(2, w // step)
        ltype = [LayerType.PATH, LayerType.TEXT, LayerType.OVAL][int(self.rng.integers(0, 3))]
        group = self.new_group("decoration")
        color = self.color(0, 200)
        sx = x + int(self.rng.integers(0, max(1, w - step * count + 1)))
        sy = y + int(self.rng.integers(0, max(1, h - size + 1)))
        for k in range(count):
            dy = int(self.rng.integers(-1, 2))
            self.add(ltype, (sx + k * step, min(max(sy + dy, y), y + h - size), size, size), self.jitter(color),
                     fragmented=True, group=group)

    def background(self, x, y, w, h) -> None:
        group = self.new_group("background")
        bw, bh = w, int(min(h, self.rng.integers(60, 141)))
        self.add(LayerType.RECTANGLE, (x, y, bw, bh), self.color(150, 256), fragmented=True, group=group)
        dot = self.color(60, 256)
        for _ in range(int(self.rng.integers(5, 16))):
            s = int(self.rng.integers(3, 9))
            dx = x + int(self.rng.integers(1, bw - s))
            dy = y + int(self.rng.integers(1, bh - s))
            ltype = LayerType.OVAL if self.rng.random() < 0.6 else LayerType.RECTANGLE
            self.add(ltype, (dx, dy, s, s), self.jitter(dot), fragmented=True, group=group)

    # ------------------------------------------------------------ normal layers
    def card(self, x, y, w, h) -> None:
        self.add(LayerType.RECTANGLE, (x, y, w, h), self.color(200, 256))
        inner_x = x + 6
        if w > 90 and self.rng.random() < 0.6:
            side = int(min(h - 12, 40))
            self.add(LayerType.BITMAP, (x + 6, y + 6, side, side), self.color(), second=self.color())
            inner_x = x + side + 12
        ty = y + 6
        for _ in range(int(self.rng.integers(1, 4))):
            th = int(self.rng.integers(6, 11))
            if ty + th > y + h - 4:
                break
            tw = int(self.rng.integers(20, max(21, x + w - inner_x - 6)))
            self.add(LayerType.TEXT, (inner_x, ty, tw, th), self.color(0, 120))
            ty += th + 4

    def lone(self, x, y, w, h) -> None:
        roll = self.rng.random()
        if roll < 0.3:
            th = int(self.rng.integers(6, 12))
            self.add(LayerType.TEXT, (x, y, int(self.rng.integers(min(30, w), w + 1)), th), self.color(0, 120))
        elif roll < 0.5:
            bw, bh = int(self.rng.integers(min(30, w), w + 1)), int(self.rng.integers(min(20, h), h + 1))
            self.add(LayerType.BITMAP, (x, y, bw, bh), self.color(), second=self.color())
        elif roll < 0.75:
            # a solitary small glyph: looks like an icon fragment but stands alone
            s = int(self.rng.integers(8, min(w, h, 25) + 1))
            ltype = [LayerType.OVAL, LayerType.PATH, LayerType.RECTANGLE][int(self.rng.integers(0, 3))]
            self.add(ltype, (x + int(self.rng.integers(0, w - s + 1)), y, s, s), self.color(0, 200))
        else:
            bw, bh = int(self.rng.integers(min(40, w), w + 1)), int(self.rng.integers(min(14, h), min(h, 44) + 1))
            self.add(LayerType.RECTANGLE, (x, y, bw, bh), self.color(80, 256))
            if bw > 30 and bh > 12:
                self.add(LayerType.TEXT, (x + 6, y + bh // 2 - 3, bw - 12, 6), self.color(0, 80))


def _bands_ok(y0: int, y1: int) -> bool:
    """A block must not straddle a window boundary."""
    return y0 // BAND == (y1 - 1) // BAND


def generate_artboard(config: GenConfig, index: int) -> Artboard:
    rng = np.random.default_rng([config.seed, index])
    b = _Builder(rng, config)
    height = int(BOARD_HEIGHTS[int(rng.integers(0, len(BOARD_HEIGHTS)))])
    target = int(rng.integers(config.layers[0], config.layers[1] + 1))
    y = MARGIN
    while len(b.items) < target:
        slots = int(rng.integers(1, 4))
        row_h = int(rng.integers(50, 121)) if slots < 3 else int(rng.integers(40, 71))
        if y + row_h > height - MARGIN:
            break
        if not _bands_ok(y, y + row_h + MARGIN):
            y = (y // BAND + 1) * BAND + MARGIN
            continue
        slot_w = (BOARD_WIDTH - MARGIN * (slots + 1)) // slots
        for k in range(slots):
            sx = MARGIN + k * (slot_w + MARGIN)
            if rng.random() < config.pattern_rate:
                kind = PATTERNS[int(rng.choice(3, p=config.mix))]
                getattr(b, kind)(sx, y, slot_w, row_h)
            elif rng.random() < 0.4:
                b.card(sx, y, slot_w, row_h)
            else:
                b.lone(sx, y, slot_w, row_h)
        y += row_h + MARGIN

    layers = []
    labels = {}
    for z, item in enumerate(b.items):
        lid = f"L{z:03d}"
        layers.append(LayerNode(lid, item.name, item.type, Rect(*map(float, item.rect)), z))
        labels[lid] = Label(item.fragmented, item.group)
    return Artboard(f"ab{config.seed}-{index:04d}", float(BOARD_WIDTH), float(height), tuple(layers), labels)


# ---------------------------------------------------------------- rendering

def _colors(name: str) -> list[tuple[int, int, int]]:
    found = [tuple(int(v) for v in m.groups()) for m in _RGB.finditer(name)]
    return found or [(128, 128, 128)]


def render(artboard: Artboard, seed: int = 0) -> Screenshot:
    """Painter's algorithm in z order over a white canvas."""
    width, height = round(artboard.width), round(artboard.height)
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    rng = np.random.default_rng(seed)
    for node in sorted(artboard.layers, key=lambda n: n.z):
        r = node.rect
        x0, y0 = max(int(round(r.x)), 0), max(int(round(r.y)), 0)
        x1, y1 = min(int(round(r.x2)), width), min(int(round(r.y2)), height)
        if x1 <= x0 or y1 <= y0:
            continue
        colors = _colors(node.name)
        # pixel centers in rect-relative units [0, 1]
        v = ((np.arange(y0, y1) + 0.5 - r.y) / max(r.h, 1e-9))[:, None]
        u = ((np.arange(x0, x1) + 0.5 - r.x) / max(r.w, 1e-9))[None, :]
        fill = np.broadcast_to(np.array(colors[0], np.uint8), (y1 - y0, x1 - x0, 3))
        if node.type is LayerType.OVAL:
            mask = (u - 0.5) ** 2 + (v - 0.5) ** 2 <= 0.25
        elif node.type is LayerType.PATH:
            mask = np.abs(u - 0.5) <= v / 2  # upward triangle
        elif node.type is LayerType.TEXT:
            mask = np.broadcast_to(((np.arange(y0, y1) - y0) % 3 < 2)[:, None], (y1 - y0, x1 - x0))
        elif node.type is LayerType.BITMAP:
            second = colors[1] if len(colors) > 1 else (255 - np.array(colors[0])).tolist()
            cells = (((np.arange(y0, y1) - y0) // 4)[:, None] + ((np.arange(x0, x1) - x0) // 4)[None, :]) % 2
            fill = np.where(cells[..., None] == 0, np.array(colors[0], np.uint8), np.array(second, np.uint8))
            grain = rng.integers(-6, 7, size=fill.shape)
            fill = np.clip(fill.astype(np.int64) + grain, 0, 255).astype(np.uint8)
            mask = np.ones((y1 - y0, x1 - x0), dtype=bool)
        else:
            mask = np.ones((y1 - y0, x1 - x0), dtype=bool)
        region = canvas[y0:y1, x0:x1]
        region[mask] = fill[mask]
    return Screenshot(width, height, canvas)


# ---------------------------------------------------------------- dataset

def fragmented_fraction(boards) -> float:
    total = frag = 0
    for board in boards:
        for label in (board.labels or {}).values():
            total += 1
            frag += label.fragmented
    return frag / total if total else 0.0


def gen_dataset(config: GenConfig, out_dir) -> dict:
    """Write ``{stem}.json`` / ``{stem}.ppm`` pairs plus a ``dataset.json`` index."""
    from .gnn.data import split_by_artboard

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    boards = []
    entries = []
    for i in range(config.n_artboards):
        board = generate_artboard(config, i)
        stem = board.id
        atomic_write(out / f"{stem}.json", serialize_artboard(board))
        atomic_write(out / f"{stem}.ppm", encode_ppm(render(board, seed=config.seed * 100003 + i)))
        boards.append(board)
        entries.append({"stem": stem, "artboard_id": board.id, "layers": len(board.layers)})
    if len(boards) >= 3:
        split = split_by_artboard([b.id for b in boards], seed=config.seed)
        where = {aid: name for name, ids in split.items() for aid in ids}
        for e in entries:
            e["split"] = where[e["artboard_id"]]
    cfg = asdict(config)
    cfg["mix"] = list(config.mix)
    cfg["layers"] = list(config.layers)
    index = {
        "config": cfg,
        "fragmented_fraction": round(fragmented_fraction(boards), 6),
        "artboards": entries,
    }
    atomic_write(out / "dataset.json", (json.dumps(index, indent=1) + "\n").encode("utf-8"))
    return index
