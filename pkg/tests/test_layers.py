import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraglayer.layers import (
    Artboard,
    Label,
    LayerNode,
    LayerType,
    ManifestError,
    Rect,
    Screenshot,
    ScreenshotError,
    decode_ppm,
    encode_ppm,
    load_screenshot,
    parse_artboard,
    serialize_artboard,
)


def manifest(layers, labels=None, width=100, height=100, board_id="ab"):
    doc = {"artboard_id": board_id, "width": width, "height": height, "layers": layers}
    if labels is not None:
        doc["labels"] = labels
    return json.dumps(doc).encode()


def layer(lid, x=0, y=0, w=10, h=10, kind="rectangle"):
    return {"id": lid, "name": lid, "type": kind, "x": x, "y": y, "w": w, "h": h}


def test_empty_manifest():
    board = parse_artboard(manifest([]))
    assert board.layers == ()
    assert board.labels is None


def test_z_follows_manifest_order():
    board = parse_artboard(manifest([layer("A"), layer("B")]))
    assert [(n.id, n.z) for n in board.layers] == [("A", 0), ("B", 1)]


def test_unknown_label_id():
    with pytest.raises(ManifestError, match="unknown label id") as info:
        parse_artboard(manifest([layer("A")], {"zz": {"fragmented": True, "group": None}}))
    assert "zz" in str(info.value)


@pytest.mark.parametrize(
    "doc, reason",
    [
        (b"{not json", "malformed JSON"),
        (manifest([layer("A"), layer("A")]), "duplicate layer id"),
        (json.dumps({"artboard_id": "x", "width": 1, "layers": []}).encode(), "height"),
        (manifest([{"id": "A", "name": "A", "type": "oval", "x": 0, "y": 0, "w": 5}]), "'h'"),
        (manifest([layer("A"), layer("B")], {"A": {"fragmented": True, "group": "g"}}), "singleton merge group"),
        (manifest([layer("A"), layer("B")], {"A": {"fragmented": False, "group": "g"},
                                             "B": {"fragmented": True, "group": "g"}}), "not fragmented"),
        (manifest([layer("A", x=500, y=500)]), "outside the artboard"),
        (manifest([layer("A", w=-1)]), "negative size"),
    ],
)
def test_manifest_errors(doc, reason):
    with pytest.raises(ManifestError, match=reason):
        parse_artboard(doc)


def test_error_reports_path():
    with pytest.raises(ManifestError) as info:
        parse_artboard(manifest([layer("A"), {"id": "B", "name": "B", "type": "oval", "x": 0, "y": 0, "w": 1}]))
    assert info.value.path == "$.layers[1]"


def test_unknown_and_reserved_types_map_to_unknown():
    board = parse_artboard(manifest([layer("A", kind="blob"), layer("B", kind="canvas"), layer("C", kind="Oval")]))
    assert [n.type for n in board.layers] == [LayerType.UNKNOWN, LayerType.UNKNOWN, LayerType.OVAL]


def test_overflowing_layer_is_accepted():
    board = parse_artboard(manifest([layer("A", x=-20, y=90, w=40, h=40)]))
    assert board.layers[0].rect == Rect(-20, 90, 40, 40)


def test_groups_in_z_order():
    labels = {"A": {"fragmented": True, "group": "g"}, "B": {"fragmented": False, "group": None},
              "C": {"fragmented": True, "group": "g"}}
    board = parse_artboard(manifest([layer("A"), layer("B"), layer("C")], labels))
    assert board.groups() == {"g": ["A", "C"]}


def test_rect_geometry():
    r = Rect(10, 20, 30, 40)
    assert r.center() == (25, 40)
    assert r.contains(Rect(10, 20, 30, 40))
    assert r.contains(Rect(15, 25, 5, 5))
    assert not r.contains(Rect(15, 25, 30, 5))
    assert r.intersects(Rect(40, 60, 5, 5))  # closed: touching corners count
    assert not r.intersects(Rect(41, 60, 5, 5))


# ---------------------------------------------------------------- round trip and fuzz

ids = st.text(alphabet="abcdefgh0123456789", min_size=1, max_size=6)
coords = st.integers(-50, 400) | st.floats(-50, 400, allow_nan=False).map(lambda v: round(v, 3))
sizes = st.integers(1, 200) | st.floats(0.5, 200).map(lambda v: round(v, 3))


@st.composite
def artboards(draw):
    width = draw(st.integers(100, 400))
    height = draw(st.integers(100, 900))
    layer_ids = draw(st.lists(ids, unique=True, max_size=12))
    layers = []
    for z, lid in enumerate(layer_ids):
        w, h = draw(sizes), draw(sizes)
        x = draw(st.floats(-w + 1, width - 1, allow_nan=False).map(lambda v: round(v, 2)))
        y = draw(st.floats(-h + 1, height - 1, allow_nan=False).map(lambda v: round(v, 2)))
        kind = draw(st.sampled_from([t for t in LayerType if t is not LayerType.CANVAS]))
        layers.append(LayerNode(lid, draw(st.text(max_size=8)), kind, Rect(x, y, w, h), z))
    labels = None
    if draw(st.booleans()):
        labels = {}
        frag = [lid for lid in layer_ids if draw(st.booleans())]
        for lid in layer_ids:
            labels[lid] = Label(lid in frag, None)
        if len(frag) >= 2:
            k = draw(st.integers(2, len(frag)))
            for lid in frag[:k]:
                labels[lid] = Label(True, "grp")
    return Artboard(draw(ids), float(width), float(height), tuple(layers), labels)


@settings(max_examples=150, deadline=None)
@given(artboards())
def test_manifest_round_trip(board):
    assert parse_artboard(serialize_artboard(board)) == board


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_parser_never_crashes_on_bytes(raw):
    try:
        parse_artboard(raw)
    except ManifestError:
        pass


json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.floats(allow_nan=False) | st.text(max_size=5),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=5), inner, max_size=4),
    max_leaves=20,
)


@settings(max_examples=300, deadline=None)
@given(st.fixed_dictionaries({
    "artboard_id": json_values,
    "width": json_values,
    "height": json_values,
    "layers": st.lists(st.dictionaries(st.sampled_from(["id", "name", "type", "x", "y", "w", "h"]), json_values)),
}, optional={"labels": json_values}))
def test_parser_never_crashes_on_json(doc):
    try:
        parse_artboard(json.dumps(doc).encode())
    except ManifestError:
        pass


def test_non_finite_numbers_rejected():
    with pytest.raises(ManifestError):
        parse_artboard(b'{"artboard_id": "a", "width": NaN, "height": 1, "layers": []}')
    with pytest.raises(ManifestError):
        parse_artboard(b'{"artboard_id": "a", "width": true, "height": 1, "layers": []}')


# ---------------------------------------------------------------- screenshots

def board_of(w, h):
    return Artboard("b", float(w), float(h), ())


def test_ppm_two_by_two():
    shot = load_screenshot(b"P6\n2 2 255\n" + bytes(range(12)), board_of(2, 2))
    assert (shot.width, shot.height) == (2, 2)
    assert shot.pixels[1, 0].tolist() == [6, 7, 8]


def test_ppm_truncated():
    with pytest.raises(ScreenshotError, match="truncated"):
        load_screenshot(b"P6\n2 2 255\n" + bytes(11), board_of(2, 2))


def test_ppm_dimension_mismatch():
    with pytest.raises(ScreenshotError, match="dimension mismatch"):
        load_screenshot(b"P6\n3 3 255\n" + bytes(27), board_of(2, 2))


def test_ppm_bad_magic_and_maxval():
    with pytest.raises(ScreenshotError, match="P6"):
        decode_ppm(b"P3\n1 1 255\n0 0 0")
    with pytest.raises(ScreenshotError, match="maxval"):
        decode_ppm(b"P6\n1 1 65535\n" + bytes(6))


def test_ppm_header_comments():
    shot = decode_ppm(b"P6\n# made by hand\n1 1\n255\n" + bytes([1, 2, 3]))
    assert shot.pixels.tolist() == [[[1, 2, 3]]]


def test_screenshot_size_rounds_artboard():
    shot = Screenshot(3, 2, np.zeros((2, 3, 3), np.uint8))
    assert load_screenshot(encode_ppm(shot), board_of(2.6, 2.4)) == shot


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_ppm_round_trip(w, h, data):
    pixels = np.array(data.draw(st.lists(st.integers(0, 255), min_size=w * h * 3, max_size=w * h * 3)),
                      np.uint8).reshape(h, w, 3)
    shot = Screenshot(w, h, pixels)
    assert decode_ppm(encode_ppm(shot)) == shot
