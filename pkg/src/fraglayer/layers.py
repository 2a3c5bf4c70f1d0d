"""Design-draft domain types and the artboard manifest / screenshot readers."""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np


class ManifestError(ValueError):
    """Invalid artboard manifest; ``path`` locates the offending element."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.reason = message


class ScreenshotError(ValueError):
    pass


class LayerType(str, enum.Enum):
    RECTANGLE = "rectangle"
    OVAL = "oval"
    PATH = "path"
    TEXT = "text"
    BITMAP = "bitmap"
    GROUP = "group"
    SYMBOL = "symbol"
    CANVAS = "canvas"
    UNKNOWN = "unknown"

    @classmethod
    def from_manifest(cls, value: str) -> "LayerType":
        try:
            parsed = cls(value.lower())
        except ValueError:
            return cls.UNKNOWN
        # canvas is reserved for the virtual root
        return cls.UNKNOWN if parsed is cls.CANVAS else parsed

    @property
    def index(self) -> int:
        return _TYPE_INDEX[self]


_TYPE_INDEX = {t: i for i, t in enumerate(LayerType)}
NUM_LAYER_TYPES = len(_TYPE_INDEX)


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative rect extent: {self}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def contains(self, other: "Rect") -> bool:
        """Boundary-inclusive containment of ``other`` in ``self``."""
        return (
            other.x >= self.x
            and other.y >= self.y
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def intersects(self, other: "Rect") -> bool:
        return (
            self.x <= other.x2
            and other.x <= self.x2
            and self.y <= other.y2
            and other.y <= self.y2
        )

    def scaled(self, s: float) -> "Rect":
        return Rect(self.x * s, self.y * s, self.w * s, self.h * s)

    def translated(self, dx: float, dy: float) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class LayerNode:
    id: str
    name: str
    type: LayerType
    rect: Rect
    z: int


@dataclass(frozen=True)
class Label:
    fragmented: bool
    group: str | None = None


@dataclass(frozen=True)
class Artboard:
    id: str
    width: float
    height: float
    layers: tuple[LayerNode, ...]
    labels: dict[str, Label] | None = field(default=None, compare=True)

    @property
    def rect(self) -> Rect:
        return Rect(0.0, 0.0, self.width, self.height)

    def layer(self, layer_id: str) -> LayerNode:
        for node in self.layers:
            if node.id == layer_id:
                return node
        raise KeyError(layer_id)

    def groups(self) -> dict[str, list[str]]:
        """Ground-truth merge groups: group id -> member ids in z order."""
        out: dict[str, list[str]] = {}
        if not self.labels:
            return out
        for node in self.layers:
            label = self.labels.get(node.id)
            if label is not None and label.group is not None:
                out.setdefault(label.group, []).append(node.id)
        return out


@dataclass(frozen=True, eq=False)
class Screenshot:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __eq__(self, other):
        return (
            isinstance(other, Screenshot)
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )


# ------------------------------------------------------------------ manifest

def _number(obj: dict, key: str, path: str) -> float:
    if key not in obj:
        raise ManifestError(f"missing required field {key!r}", path)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ManifestError(f"field {key!r} must be a number", f"{path}.{key}")
    if not math.isfinite(val):
        raise ManifestError(f"field {key!r} must be finite", f"{path}.{key}")
    return float(val)


def _string(obj: dict, key: str, path: str) -> str:
    if key not in obj:
        raise ManifestError(f"missing required field {key!r}", path)
    val = obj[key]
    if not isinstance(val, str):
        raise ManifestError(f"field {key!r} must be a string", f"{path}.{key}")
    return val


def parse_artboard(manifest_bytes: bytes) -> Artboard:
    """Parse and validate an artboard manifest.

    Raises :class:`ManifestError` for any malformed input, never anything else.
    """
    try:
        doc = json.loads(manifest_bytes.decode("utf-8") if isinstance(manifest_bytes, bytes) else manifest_bytes)
    except (UnicodeDecodeError, json.JSONDecodeError, RecursionError) as exc:
        raise ManifestError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")

    board_id = _string(doc, "artboard_id", "$")
    width = _number(doc, "width", "$")
    height = _number(doc, "height", "$")
    if width < 0 or height < 0:
        raise ManifestError("artboard size must be non-negative")
    board = Rect(0.0, 0.0, width, height)

    raw_layers = doc.get("layers")
    if raw_layers is None:
        raise ManifestError("missing required field 'layers'")
    if not isinstance(raw_layers, list):
        raise ManifestError("'layers' must be a list", "$.layers")

    layers = []
    seen: set[str] = set()
    for z, item in enumerate(raw_layers):
        path = f"$.layers[{z}]"
        if not isinstance(item, dict):
            raise ManifestError("layer must be an object", path)
        layer_id = _string(item, "id", path)
        if layer_id in seen:
            raise ManifestError(f"duplicate layer id {layer_id!r}", path)
        seen.add(layer_id)
        name = _string(item, "name", path)
        ltype = LayerType.from_manifest(_string(item, "type", path))
        x, y = _number(item, "x", path), _number(item, "y", path)
        w, h = _number(item, "w", path), _number(item, "h", path)
        if w < 0 or h < 0:
            raise ManifestError(f"layer {layer_id!r} has negative size", path)
        rect = Rect(x, y, w, h)
        if not board.intersects(rect):
            raise ManifestError(f"layer {layer_id!r} lies entirely outside the artboard", path)
        layers.append(LayerNode(layer_id, name, ltype, rect, z))

    labels = None
    if "labels" in doc and doc["labels"] is not None:
        labels = _parse_labels(doc["labels"], seen)

    return Artboard(board_id, width, height, tuple(layers), labels)


def _parse_labels(raw, known: set[str]) -> dict[str, Label]:
    if not isinstance(raw, dict):
        raise ManifestError("'labels' must be an object", "$.labels")
    labels: dict[str, Label] = {}
    members: dict[str, list[str]] = {}
    for layer_id, entry in raw.items():
        path = f"$.labels[{json.dumps(layer_id)}]"
        if layer_id not in known:
            raise ManifestError(f"unknown label id {layer_id!r}", path)
        if not isinstance(entry, dict):
            raise ManifestError("label must be an object", path)
        frag = entry.get("fragmented")
        if not isinstance(frag, bool):
            raise ManifestError("'fragmented' must be a boolean", path)
        group = entry.get("group")
        if group is not None and not isinstance(group, str):
            raise ManifestError("'group' must be a string or null", path)
        if group is not None:
            if not frag:
                raise ManifestError(f"layer {layer_id!r} is grouped but not fragmented", path)
            members.setdefault(group, []).append(layer_id)
        labels[layer_id] = Label(frag, group)
    for group, ids in members.items():
        if len(ids) < 2:
            raise ManifestError(f"singleton merge group {group!r} (member {ids[0]!r})", "$.labels")
    return labels


def _plain(v: float):
    return int(v) if float(v).is_integer() else v


def artboard_to_dict(board: Artboard) -> dict:
    doc = {
        "artboard_id": board.id,
        "width": _plain(board.width),
        "height": _plain(board.height),
        "layers": [
            {
                "id": n.id,
                "name": n.name,
                "type": n.type.value,
                "x": _plain(n.rect.x),
                "y": _plain(n.rect.y),
                "w": _plain(n.rect.w),
                "h": _plain(n.rect.h),
            }
            for n in board.layers
        ],
    }
    if board.labels is not None:
        doc["labels"] = {
            k: {"fragmented": v.fragmented, "group": v.group} for k, v in board.labels.items()
        }
    return doc


def serialize_artboard(board: Artboard) -> bytes:
    return (json.dumps(artboard_to_dict(board), indent=1) + "\n").encode("utf-8")


# ---------------------------------------------------------------- screenshot

_PPM_HEADER = re.compile(rb"P6(?:\s+|#[^\n]*\n)*?(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def decode_ppm(ppm_bytes: bytes) -> Screenshot:
    if not ppm_bytes.startswith(b"P6"):
        raise ScreenshotError("not a binary PPM: expected magic 'P6'")
    m = _PPM_HEADER.match(ppm_bytes)
    if m is None:
        raise ScreenshotError("malformed PPM header")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ScreenshotError(f"unsupported PPM maxval {maxval}; expected 255")
    body = ppm_bytes[m.end():]
    need = width * height * 3
    if len(body) < need:
        raise ScreenshotError(f"truncated pixel data: {len(body)} of {need} bytes")
    pixels = np.frombuffer(body[:need], dtype=np.uint8).reshape(height, width, 3).copy()
    return Screenshot(width, height, pixels)


def load_screenshot(ppm_bytes: bytes, artboard: Artboard) -> Screenshot:
    shot = decode_ppm(ppm_bytes)
    want = (round(artboard.width), round(artboard.height))
    if (shot.width, shot.height) != want:
        raise ScreenshotError(
            f"dimension mismatch: raster {shot.width}x{shot.height}, artboard needs {want[0]}x{want[1]}"
        )
    return shot


def encode_ppm(shot: Screenshot) -> bytes:
    header = f"P6\n{shot.width} {shot.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(shot.pixels, dtype=np.uint8).tobytes()
