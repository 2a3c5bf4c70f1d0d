import filecmp
import json

import numpy as np
import pytest

from fraglayer.gnn.data import dataset_split
from fraglayer.layers import Artboard, LayerNode, LayerType, Rect, load_screenshot, parse_artboard
from fraglayer.synthgen import GenConfig, gen_dataset, generate_artboard, render


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    return not (cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files)


def test_same_seed_same_bytes(tmp_path):
    gen_dataset(GenConfig(n_artboards=4, seed=42), tmp_path / "a")
    gen_dataset(GenConfig(n_artboards=4, seed=42), tmp_path / "b")
    assert same_tree(tmp_path / "a", tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_different_seed_differs():
    assert generate_artboard(GenConfig(seed=1), 0) != generate_artboard(GenConfig(seed=2), 0)


def test_artboards_are_independent_of_count():
    assert generate_artboard(GenConfig(n_artboards=3, seed=4), 2) == generate_artboard(GenConfig(n_artboards=50, seed=4), 2)


@pytest.fixture(scope="module")
def boards():
    return [generate_artboard(GenConfig(seed=8), i) for i in range(40)]


def test_group_invariants(boards):
    kinds = set()
    for b in boards:
        for gid, members in b.groups().items():
            kinds.add(gid.split("-")[0])
            assert len(members) >= 2
            assert all(b.labels[m].fragmented for m in members)
    assert kinds == {"icon", "decoration", "background"}


def test_pattern_shapes(boards):
    for b in boards:
        for gid, members in b.groups().items():
            rects = [b.layer(m).rect for m in members]
            kind = gid.split("-")[0]
            if kind == "icon":
                container, parts = rects[0], rects[1:]
                assert 3 <= len(parts) <= 8
                assert all(container.contains(r) for r in parts)
            elif kind == "background":
                base, dots = rects[0], rects[1:]
                assert 5 <= len(dots) <= 15
                assert all(base.contains(r) for r in dots)
                assert all(r.w <= 8 and r.h <= 8 for r in dots)
            else:
                assert 2 <= len(rects) <= 5
                assert not any(a.contains(c) for a in rects for c in rects if a is not c)


def test_every_triple_parses(tmp_path):
    index = gen_dataset(GenConfig(n_artboards=6, seed=3), tmp_path)
    for entry in index["artboards"]:
        board = parse_artboard((tmp_path / f"{entry['stem']}.json").read_bytes())
        load_screenshot((tmp_path / f"{entry['stem']}.ppm").read_bytes(), board)
        assert entry["split"] in ("train", "val", "test")
    assert 0 < index["fragmented_fraction"] < 1
    assert json.loads((tmp_path / "dataset.json").read_text())["config"]["seed"] == 3
    split = dataset_split(tmp_path)
    assert sorted(sum(split.values(), [])) == sorted(e["stem"] for e in index["artboards"])


def test_class_balance_knob(boards):
    def fraction(bs):
        labels = [l.fragmented for b in bs for l in b.labels.values()]
        return sum(labels) / len(labels)

    rich = [generate_artboard(GenConfig(seed=8, pattern_rate=0.6), i) for i in range(20)]
    assert fraction(rich) > fraction(boards)
    assert 0.25 < fraction(boards) < 0.6


def test_bad_config():
    with pytest.raises(ValueError):
        GenConfig(mix=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        GenConfig(layers=(10, 5))


# ---------------------------------------------------------------- rendering

def test_empty_artboard_is_white():
    shot = render(Artboard("e", 7, 5, ()))
    assert shot.pixels.shape == (5, 7, 3) and (shot.pixels == 255).all()


def test_full_canvas_rectangle():
    layer = LayerNode("r", "rectangle#rgb(10,20,30)", LayerType.RECTANGLE, Rect(0, 0, 6, 4), 0)
    shot = render(Artboard("e", 6, 4, (layer,)))
    assert (shot.pixels == np.array([10, 20, 30], np.uint8)).all()


def test_higher_z_paints_over():
    below = LayerNode("b", "rectangle#rgb(200,0,0)", LayerType.RECTANGLE, Rect(0, 0, 6, 6), 0)
    above = LayerNode("a", "rectangle#rgb(0,0,200)", LayerType.RECTANGLE, Rect(3, 3, 6, 6), 1)
    px = render(Artboard("e", 10, 10, (below, above))).pixels
    assert px[4, 4].tolist() == [0, 0, 200]
    assert px[1, 1].tolist() == [200, 0, 0]


def test_render_is_deterministic(boards):
    assert render(boards[0], seed=5) == render(boards[0], seed=5)
