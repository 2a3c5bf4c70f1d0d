"""Command-line entry point: gen, train, eval, detect, merge, render, gradcheck, replay.

Every command writes a run manifest next to its output holding the resolved
flags, the seed, the artifact paths and the tool version. ``replay`` re-executes
a command from such a manifest.
"""

from __future__ import annotations

import argparse
import colorsys
import json
import logging
import os
import sys
from pathlib import Path


from . import __version__
from .features import FUSION_MODES, VISUAL_METHODS
from .graph import assign_windows, build_containment_tree, scale_and_window, scale_factor
from .layers import Artboard, ManifestError, ScreenshotError, load_screenshot, parse_artboard
from .merge import MergeConfig, merge_fragments
from .nn.checkpoint import CheckpointError, atomic_write

log = logging.getLogger("fraglayer")

MANIFEST_SUFFIX = ".manifest.json"
PATH_FLAGS = ("data", "out", "checkpoint", "manifest", "screenshot", "detections", "merge")


class CliError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=1, sort_keys=False) + "\n").encode("utf-8")


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write(path, _dump_json(obj))


def manifest_path(output: Path) -> Path:
    return output / "run_manifest.json" if output.is_dir() else output.with_name(output.name + MANIFEST_SUFFIX)


def _relative(path, base: Path) -> str:
    return os.path.relpath(os.path.abspath(path), os.path.abspath(base))


def write_manifest(args: argparse.Namespace, output: Path, artifacts: dict) -> None:
    """Resolved flags and artifacts; paths are stored relative to the manifest's directory."""
    target = manifest_path(output)
    base = target.parent
    config = {k: v for k, v in vars(args).items() if k not in ("func", "command", "quiet")}
    for key in PATH_FLAGS:
        if config.get(key) is not None:
            config[key] = _relative(config[key], base)
    artifacts = {k: [_relative(p, base) for p in v] if isinstance(v, list) else _relative(v, base)
                 for k, v in artifacts.items()}
    manifest = {
        "tool": "fraglayer",
        "version": __version__,
        "command": args.command,
        "config": config,
        "seed": config.get("seed"),
        "artifacts": artifacts,
    }
    write_json(target, manifest)


def read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise CliError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None


def read_artboard(path: str | Path) -> Artboard:
    path = Path(path)
    if not path.exists():
        raise CliError(f"{path}: no such file")
    return parse_artboard(path.read_bytes())


def _screenshot_path(manifest: str, screenshot: str | None) -> Path:
    return Path(screenshot) if screenshot else Path(manifest).with_suffix(".ppm")


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    from .synthgen import GenConfig, gen_dataset

    config = GenConfig(n_artboards=args.n, seed=args.seed, pattern_rate=args.pattern_rate, noise=args.noise)
    out = Path(args.out)
    index = gen_dataset(config, out)
    stems = [e["stem"] for e in index["artboards"]]
    write_manifest(args, out, {"dataset": out / "dataset.json",
                               "artboards": [out / f"{stem}.{ext}" for stem in stems for ext in ("json", "ppm")]})
    print(f"wrote {len(stems)} artboards to {out} (fragmented fraction {index['fragmented_fraction']:.3f})")
    return 0


def _load_split_samples(data: str, visual, split: dict[str, list[str]], names) -> dict:
    from .gnn.data import load_samples

    if not Path(data).is_dir():
        raise CliError(f"{data}: no such dataset directory")
    return {name: load_samples(data, visual, split[name]) for name in names}


def cmd_train(args) -> int:
    from .gnn.data import dataset_split
    from .gnn.train import TrainConfig, history_csv, save_checkpoint, train, write_text

    config = TrainConfig(seed=args.seed, epochs=args.epochs, lr=args.lr, model=args.model, visual=args.visual,
                         features=args.features, threshold=args.threshold)
    split = dataset_split(args.data, args.seed)
    sets = _load_split_samples(args.data, config.model_config().visual_config(), split, ("train", "val"))
    result = train(sets["train"], sets["val"], config, progress=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    extra = {"split": split, "best_epoch": result.best_epoch, "tau": args.tau, "threshold": args.threshold}
    save_checkpoint(out / "model.ckpt", result.model, seed=args.seed, flags=flags, adam=result.adam, extra=extra)
    write_text(out / "history.csv", history_csv(result.history))
    write_manifest(args, out, {"checkpoint": out / "model.ckpt", "history": out / "history.csv"})
    best = result.history[result.best_epoch - 1] if result.best_epoch else {}
    print(f"best epoch {result.best_epoch}: val f1 {best.get('val_f1', float('nan')):.4f}; wrote {out}")
    return 0


def _load_model(path: str):
    from .gnn.train import load_checkpoint

    if not Path(path).exists():
        raise CliError(f"{path}: no such checkpoint")
    return load_checkpoint(path)


def cmd_eval(args) -> int:
    from .gnn.data import dataset_split
    from .gnn.train import evaluate

    model, meta, _ = _load_model(args.checkpoint)
    threshold = args.threshold if args.threshold is not None else meta.get("threshold", 0.5)
    split = dataset_split(args.data, meta.get("seed", 0))
    split["all"] = [s for name in ("train", "val", "test") for s in split[name]]
    samples = _load_split_samples(args.data, model.config.visual_config(), split, (args.split,))[args.split]
    metrics = evaluate(model, samples, threshold)
    report = {"split": args.split, "threshold": threshold, "graphs": len(samples), **metrics.as_dict()}
    out = Path(args.out)
    write_json(out, report)
    write_manifest(args, out, {"metrics": out})
    print(" ".join(f"{k} {report[k]:.4f}" for k in ("precision", "recall", "accuracy", "f1")))
    return 0


def detect_artboard(model, board: Artboard, screenshot, threshold: float) -> dict:
    from .gnn.data import window_sample

    visual = model.config.visual_config()
    windows = scale_and_window(board, screenshot) if visual is not None else assign_windows(board)
    out = []
    for window in windows:
        layers = []
        if window.layers:
            sample = window_sample(board, window, visual)
            probs = model.probabilities(sample)
            for node in range(1, sample.num_nodes):
                p = float(probs[node])
                layers.append({"id": sample.layer_ids[node], "prob": p, "label": int(p >= threshold)})
        out.append({"index": window.index, "layers": layers})
    return {"artboard": board.id, "windows": out}


def cmd_detect(args) -> int:
    model, meta, _ = _load_model(args.checkpoint)
    threshold = args.threshold if args.threshold is not None else meta.get("threshold", 0.5)
    board = read_artboard(args.manifest)
    shot = None
    if model.config.visual_config() is not None:
        shot_path = _screenshot_path(args.manifest, args.screenshot)
        if not shot_path.exists():
            raise CliError(f"{shot_path}: no such screenshot")
        shot = load_screenshot(shot_path.read_bytes(), board)
    report = detect_artboard(model, board, shot, threshold)
    out = Path(args.out)
    write_json(out, report)
    write_manifest(args, out, {"detections": out})
    positives = sum(l["label"] for w in report["windows"] for l in w["layers"])
    print(f"{board.id}: {positives} layers flagged as fragmented")
    return 0


def merge_artboard(board: Artboard, positives_by_window: dict[int, set[str]], tau: float) -> dict:
    """Per-window merge groups; bounds are mapped back to artboard coordinates."""
    s = scale_factor(board)
    config = MergeConfig(tau=tau)
    windows = []
    for window in assign_windows(board):
        tree = build_containment_tree(window)
        result = merge_fragments(tree, positives_by_window.get(window.index, set()), config)
        groups = []
        for g in result.groups:
            b = g.bounds.scaled(1.0 / s)
            groups.append({"id": g.id, "members": g.members, "bounds": {"x": b.x, "y": b.y, "w": b.w, "h": b.h}})
        windows.append({"window": window.index, "groups": groups, "singletons": result.singletons})
    return {"artboard": board.id, "tau": tau, "windows": windows}


def cmd_merge(args) -> int:
    board = read_artboard(args.manifest)
    positives: dict[int, set[str]] = {}
    if args.oracle_labels:
        if not board.labels:
            raise CliError(f"{args.manifest}: --oracle-labels needs a labeled manifest")
        flagged = {lid for lid, label in board.labels.items() if label.fragmented}
        for window in assign_windows(board):
            positives[window.index] = flagged & set(window.members)
    else:
        if not args.detections:
            raise CliError("merge needs --detections or --oracle-labels")
        det = read_json(args.detections)
        if det.get("artboard") != board.id:
            raise CliError(f"{args.detections}: detections are for artboard {det.get('artboard')!r}, not {board.id!r}")
        for w in det["windows"]:
            positives[int(w["index"])] = {l["id"] for l in w["layers"] if int(l["label"]) == 1}
    report = merge_artboard(board, positives, args.tau)
    out = Path(args.out)
    write_json(out, report)
    write_manifest(args, out, {"merge": out})
    n = sum(len(w["groups"]) for w in report["windows"])
    print(f"{board.id}: {n} merge groups")
    return 0


def group_colors(n: int) -> list[str]:
    """``n`` distinct stroke colors, hues spaced by the golden angle."""
    out = []
    for k in range(n):
        r, g, b = colorsys.hls_to_rgb((k * 0.381966) % 1.0, 0.45, 0.85)
        out.append("#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255)))
    return out


def render_svg(board: Artboard, merge: dict) -> str:
    groups = [(w["window"], g) for w in merge["windows"] for g in w["groups"]]
    colors = group_colors(len(groups))
    fmt = lambda v: f"{v:g}"
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fmt(board.width)}" height="{fmt(board.height)}" '
        f'viewBox="0 0 {fmt(board.width)} {fmt(board.height)}">',
        "<!-- legend",
    ]
    for (window, g), color in zip(groups, colors):
        lines.append(f"  w{window}/{g['id']} {color}: {' '.join(g['members'])}")
    lines.append("-->")
    for (window, g), color in zip(groups, colors):
        lines.append(f'<g id="w{window}-{g["id"]}">')
        for lid in g["members"]:
            r = board.layer(lid).rect
            lines.append(f'  <rect x="{fmt(r.x)}" y="{fmt(r.y)}" width="{fmt(r.w)}" height="{fmt(r.h)}" '
                         f'stroke="{color}" fill="none" stroke-width="1"/>')
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def cmd_render(args) -> int:
    board = read_artboard(args.manifest)
    merge = read_json(args.merge)
    if merge.get("artboard") != board.id:
        raise CliError(f"{args.merge}: merge output is for artboard {merge.get('artboard')!r}, not {board.id!r}")
    try:
        svg = render_svg(board, merge)
    except KeyError as exc:
        raise CliError(f"{args.merge}: unknown layer {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write(out, svg.encode("utf-8"))
    write_manifest(args, out, {"svg": out})
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_all

    results = run_all(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:<24} max rel err {r.max_rel_error:.2e} "
              f"({r.probes} probes, {r.rejected} at kinks)")
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks within {TOLERANCE:g}")
    if args.out:
        out = Path(args.out)
        report = {"tolerance": TOLERANCE, "passed": ok, "checks": [
            {"name": r.name, "max_rel_error": r.max_rel_error, "probes": r.probes, "rejected": r.rejected,
             "passed": r.passed} for r in results]}
        write_json(out, report)
        write_manifest(args, out, {"report": out})
    return 0 if ok else 1


def cmd_replay(args) -> int:
    manifest = read_json(args.run_manifest)
    command = manifest.get("command")
    if command not in COMMANDS or command == "replay":
        raise CliError(f"{args.run_manifest}: cannot replay command {command!r}")
    base = Path(args.run_manifest).parent
    config = dict(manifest["config"])
    for key in PATH_FLAGS:
        if config.get(key) is not None:
            config[key] = os.path.normpath(base / config[key])
    replayed = argparse.Namespace(quiet=args.quiet, **config)
    replayed.command = command
    return COMMANDS[command](replayed)


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "detect": cmd_detect,
    "merge": cmd_merge,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
    "replay": cmd_replay,
}


# ---------------------------------------------------------------- parser

def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _probability(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fraglayer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fraglayer {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled synthetic dataset")
    p.add_argument("--n", type=int, default=10, help="number of artboards")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pattern-rate", type=_probability, default=0.22, help="chance a layout block is a fragmented pattern")
    p.add_argument("--noise", type=float, default=1.0, help="color jitter scale")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a detector")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", choices=("gat", "gcn", "none"), default="gat")
    p.add_argument("--visual", choices=VISUAL_METHODS, default="crop")
    p.add_argument("--features", choices=FUSION_MODES, default="le+vf")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=_positive(float), default=1e-3)
    p.add_argument("--tau", type=_positive(float), default=40.0, help="merge distance recorded for downstream merging")
    p.add_argument("--threshold", type=_probability, default=0.5)
    p.add_argument("--out", required=True, help="output directory for checkpoint and history")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--threshold", type=_probability, default=None, help="defaults to the training threshold")
    p.add_argument("--out", required=True, help="metrics JSON path")

    p = sub.add_parser("detect", help="per-layer fragmented probabilities for one artboard")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True, help="artboard manifest JSON")
    p.add_argument("--screenshot", default=None, help="PPM screenshot; defaults to the manifest path with .ppm")
    p.add_argument("--threshold", type=_probability, default=None, help="defaults to the training threshold")
    p.add_argument("--out", required=True, help="detection JSON path")

    p = sub.add_parser("merge", help="group detected fragments into merge areas")
    p.add_argument("--manifest", required=True, help="artboard manifest JSON")
    p.add_argument("--detections", default=None, help="detection JSON from the detect command")
    p.add_argument("--oracle-labels", action="store_true", help="use the manifest's ground-truth labels")
    p.add_argument("--tau", type=_positive(float), default=40.0, help="center distance threshold at 750-px scale")
    p.add_argument("--out", required=True, help="merge JSON path")

    p = sub.add_parser("render", help="draw merge groups as an SVG overlay")
    p.add_argument("--manifest", required=True)
    p.add_argument("--merge", required=True, help="merge JSON from the merge command")
    p.add_argument("--out", required=True, help="SVG path")

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional JSON report path")

    p = sub.add_parser("replay", help="re-run a command from its run manifest")
    p.add_argument("run_manifest")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, ManifestError, ScreenshotError, CheckpointError, ValueError, OSError) as exc:
        print(f"fraglayer {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
