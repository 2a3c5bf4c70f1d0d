"""Central finite-difference checks of every differentiable piece, in float64.

Each check builds a scalar objective ``sum(out * R)`` with a fixed random
``R``, runs one taped backward pass, and compares against central differences.
The reported error is ``max |a - n| / max(|a|, |n|, 1e-6)`` over the probed
entries.

Finite differences are only an oracle where the function is smooth. A probe
whose central differences at ``EPS`` and ``EPS / 10`` disagree sits on a ReLU or
max-pool kink; it is counted as rejected and another entry is drawn instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .nn import tensor as T

TOLERANCE = 1e-4
EPS = 1e-5
KINK_TOLERANCE = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    probes: int
    rejected: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= TOLERANCE)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def check_function(name: str, build: Callable[[list[T.Tensor]], T.Tensor], inputs: Sequence[np.ndarray],
                   rng: np.random.Generator, max_probes: int | None = None) -> CheckResult:
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [T.Tensor(a, requires_grad=True) for a in arrays]
    with T.Tape() as tape:
        out = build(tensors)
        weights = rng.standard_normal(out.shape)
        objective = T.sum_(T.mul(out, weights))
    tape.backward(objective)

    def value() -> float:
        fresh = [T.Tensor(a) for a in arrays]
        return float(np.sum(build(fresh).data * weights))

    def central(flat, k, eps) -> float:
        orig = flat[k]
        flat[k] = orig + eps
        up = value()
        flat[k] = orig - eps
        down = value()
        flat[k] = orig
        return (up - down) / (2 * eps)

    worst, probes, rejected = 0.0, 0, 0
    for arr, tens in zip(arrays, tensors):
        analytic = np.zeros_like(arr) if tens.grad is None else tens.grad
        flat = arr.reshape(-1)
        candidates = np.arange(flat.size)
        if max_probes is not None and flat.size > max_probes:
            candidates = rng.permutation(flat.size)
        wanted = flat.size if max_probes is None else min(max_probes, flat.size)
        taken = 0
        for k in candidates:
            if taken == wanted:
                break
            numeric = central(flat, k, EPS)
            if max_probes is not None:
                fine = central(flat, k, EPS / 10)
                if abs(numeric - fine) > KINK_TOLERANCE * max(abs(numeric), abs(fine), 1e-6):
                    rejected += 1
                    continue
            a = analytic.reshape(-1)[k]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-6))
            probes += 1
            taken += 1
    return CheckResult(name, worst, probes, rejected)


def primitive_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    r = lambda *s: rng.standard_normal(s)
    seg = np.array([0, 0, 1, 2, 2, 2, 3])
    bins = np.array([[[[0, 2, 0, 3], [0, 2, 3, 6]], [[2, 5, 0, 3], [2, 5, 3, 6]]],
                     [[[1, 2, 1, 2], [1, 2, 2, 4]], [[2, 4, 1, 2], [2, 4, 2, 4]]]])
    labels = np.array([0, 1, 1, 0, 1])
    mask = np.array([True, True, False, True, True])
    cases: list[tuple[str, Callable, list]] = [
        ("matmul", lambda t: T.matmul(t[0], t[1]), [r(3, 4), r(4, 2)]),
        ("linear", lambda t: T.linear(t[0], t[1], t[2]), [r(3, 4), r(4, 2), r(2)]),
        ("add", lambda t: T.add(t[0], t[1]), [r(3, 4), r(4)]),
        ("sub", lambda t: T.sub(t[0], t[1]), [r(3, 1), r(3, 4)]),
        ("mul", lambda t: T.mul(t[0], t[1]), [r(2, 3, 4), r(3, 1)]),
        ("scale", lambda t: T.scale(t[0], -1.7), [r(3, 2)]),
        ("sum", lambda t: T.sum_(t[0], axis=1), [r(3, 4)]),
        ("mean", lambda t: T.mean(t[0], axis=0), [r(3, 4)]),
        ("reshape", lambda t: T.reshape(t[0], (6, 2)), [r(3, 4)]),
        ("transpose", lambda t: T.transpose(t[0], (2, 0, 1)), [r(2, 3, 4)]),
        ("concat", lambda t: T.concat([t[0], t[1]], axis=1), [r(3, 2), r(3, 5)]),
        ("slice", lambda t: T.slice_(t[0], (slice(1, 3), slice(None, None, 2))), [r(4, 5)]),
        ("gather_rows", lambda t: T.gather_rows(t[0], np.array([2, 0, 2, 1])), [r(3, 4)]),
        ("relu", lambda t: T.relu(t[0]), [_away_from_zero(rng, (4, 5))]),
        ("leaky_relu", lambda t: T.leaky_relu(t[0], 0.2), [_away_from_zero(rng, (4, 5))]),
        ("elu", lambda t: T.elu(t[0]), [_away_from_zero(rng, (4, 5))]),
        ("segment_sum", lambda t: T.segment_sum(t[0], seg, 4), [r(7, 3)]),
        ("segment_mean", lambda t: T.segment_mean(t[0], seg, 4), [r(7, 3)]),
        ("segment_softmax", lambda t: T.segment_softmax(t[0], seg, 4), [r(7, 2)]),
        ("conv2d", lambda t: T.conv2d(t[0], t[1], t[2]), [r(2, 3, 5, 6), r(4, 3, 3, 3), r(4)]),
        ("maxpool2d", lambda t: T.maxpool2d(t[0]), [r(2, 3, 4, 6)]),
        ("roi_maxpool", lambda t: T.roi_maxpool(t[0], bins), [r(3, 5, 6)]),
        ("log_softmax", lambda t: T.log_softmax(t[0]), [r(4, 3)]),
        ("cross_entropy", lambda t: T.cross_entropy(t[0], labels, mask), [r(5, 2)]),
        ("cross_entropy_weighted", lambda t: T.cross_entropy(t[0], labels, mask, np.array([1.0, 3.0])), [r(5, 2)]),
    ]
    return [check_function(name, fn, inputs, rng) for name, fn, inputs in cases]


def five_node_graph():
    from .graph import build_containment_tree, build_graph
    from .layers import LayerNode, LayerType, Rect

    layers = [
        LayerNode("a", "a", LayerType.RECTANGLE, Rect(100, 100, 300, 300), 0),
        LayerNode("b", "b", LayerType.OVAL, Rect(120, 120, 40, 40), 1),
        LayerNode("c", "c", LayerType.PATH, Rect(200, 150, 50, 60), 2),
        LayerNode("d", "d", LayerType.TEXT, Rect(450, 500, 200, 30), 3),
    ]
    tree = build_containment_tree(Rect(0, 0, 750, 750), layers)
    return tree, build_graph(tree)


def gat_layer_check(seed: int = 0) -> CheckResult:
    from .gnn.layers import Arcs, GatLayerParams, gat_layer_forward

    rng = np.random.default_rng(seed)
    _, graph = five_node_graph()
    arcs = Arcs.of(graph)
    heads, head_dim, f = 3, 4, 6
    proto = GatLayerParams.init(rng, f, heads, head_dim, "concat")
    inputs = [rng.standard_normal((graph.num_nodes, f))] + [t.data.astype(np.float64) for t in proto.tensors().values()]
    inputs[-1] = rng.standard_normal(inputs[-1].shape) * 0.1

    def build(t):
        params = GatLayerParams(t[1], t[2], t[3], t[4], heads, head_dim, "concat")
        return gat_layer_forward(arcs, t[0], params, activate=True)

    return check_function("gat_layer", build, inputs, rng)


def model_check(seed: int = 0, model: str = "gat", visual: str = "crop", probes_per_tensor: int = 4) -> CheckResult:
    """Whole detector (embeddings, CNN, GNN, head, loss) on a 5-node graph."""
    from .gnn.data import window_sample
    from .gnn.model import FragmentDetector, ModelConfig
    from .graph import Window
    from .layers import Artboard, Label

    rng = np.random.default_rng(seed)
    tree, _ = five_node_graph()
    labels = {"a": Label(True, None), "b": Label(False), "c": Label(True), "d": Label(False)}
    board = Artboard("grad", 750, 750, tree.layers, labels)
    patch = rng.integers(0, 256, size=(750, 750, 3), dtype=np.uint8)
    config = ModelConfig(model=model, visual=visual, crop_size=16, roi_input=40)
    sample = window_sample(board, Window(0, tree.layers, patch), config.visual_config(), tree)
    detector = FragmentDetector(config, seed).astype(np.float64)
    names = list(detector.params)

    def build(t):
        for name, tensor in zip(names, t):
            setattr_param(detector, name, tensor)
        return T.cross_entropy(detector(sample), sample.labels, sample.mask)

    inputs = [detector.params[n].data.copy() for n in names]
    for n, arr in zip(names, inputs):
        if n.endswith(".b"):
            arr[...] = rng.standard_normal(arr.shape) * 0.05
    return check_function(f"model_{model}_{visual}", build, inputs, rng, max_probes=probes_per_tensor)


def setattr_param(detector, name: str, tensor: T.Tensor) -> None:
    """Swap the tensor object behind a named parameter."""
    if name == "embed.type":
        detector.embed.type_embed = tensor
    elif name == "embed.geom":
        detector.embed.geom_embed = tensor
    elif name.startswith("cnn."):
        detector.cnn.params[name[4:]] = tensor
    elif name in ("proj.w", "proj.b"):
        setattr(detector, "proj_w" if name == "proj.w" else "proj_b", tensor)
    elif name.startswith(("gat", "gcn")):
        stack = detector.gat if name.startswith("gat") else detector.gcn
        idx, _, field = name[3:].partition(".")
        layer = stack[int(idx)]
        attr = {"w": "weight", "attn": "attn", "b": "bias", "skip.w": "skip_w", "skip.b": "skip_b"}[field]
        setattr(layer, attr, tensor)
    elif name.startswith("head."):
        _, idx, kind = name.split(".")
        setattr(detector, f"head{idx}_{kind}", tensor)
    else:
        raise KeyError(name)


def run_all(seed: int = 0) -> list[CheckResult]:
    results = primitive_checks(seed)
    results.append(gat_layer_check(seed))
    results.append(model_check(seed, "gat"))
    results.append(model_check(seed, "gat", "roi"))
    results.append(model_check(seed, "gcn"))
    return results
