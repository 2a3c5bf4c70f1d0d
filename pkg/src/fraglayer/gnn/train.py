"""Training loop, evaluation metrics and checkpoint I/O for the detector."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..nn import checkpoint as ckpt
from ..nn import tensor as T
from ..nn.optim import AdamState, PlateauSchedule, adam_step
from .data import GraphSample
from .model import FragmentDetector, ModelConfig

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_precision", "val_recall", "val_accuracy", "val_f1", "lr")


@dataclass
class Metrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    undefined: list[str] = field(default_factory=list)

    @staticmethod
    def _ratio(num: int, den: int) -> float:
        return num / den if den else 0.0

    @property
    def precision(self) -> float:
        return self._ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return self._ratio(self.tp, self.tp + self.fn)

    @property
    def accuracy(self) -> float:
        return self._ratio(self.tp + self.tn, self.tp + self.fp + self.fn + self.tn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @classmethod
    def from_predictions(cls, predicted, actual) -> "Metrics":
        predicted = np.asarray(predicted, dtype=bool)
        actual = np.asarray(actual, dtype=bool)
        m = cls(
            tp=int(np.sum(predicted & actual)),
            fp=int(np.sum(predicted & ~actual)),
            fn=int(np.sum(~predicted & actual)),
            tn=int(np.sum(~predicted & ~actual)),
        )
        if m.tp + m.fp == 0:
            m.undefined.append("precision")
        if m.tp + m.fn == 0:
            m.undefined.append("recall")
        if m.tp + m.fp + m.fn + m.tn == 0:
            m.undefined.append("accuracy")
        if "precision" in m.undefined or "recall" in m.undefined or m.precision + m.recall == 0:
            m.undefined.append("f1")
        return m

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "undefined": list(self.undefined),
        }


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 50
    lr: float = 1e-3
    patience: int = 10
    min_lr: float = 1e-6
    model: str = "gat"
    visual: str = "crop"
    features: str = "le+vf"
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    class_weights: tuple[float, float] | None = None
    threshold: float = 0.5
    crop_size: int = 32

    def __post_init__(self):
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {self.ratios}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    def model_config(self) -> ModelConfig:
        return ModelConfig(model=self.model, visual=self.visual, features=self.features, crop_size=self.crop_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        d["class_weights"] = list(self.class_weights) if self.class_weights else None
        return d


@dataclass
class TrainResult:
    model: FragmentDetector
    history: list[dict]
    best_epoch: int
    adam: AdamState
    schedule: PlateauSchedule
    config: TrainConfig


def predict(model: FragmentDetector, sample: GraphSample, threshold: float = 0.5) -> np.ndarray:
    return model.probabilities(sample) >= threshold


def evaluate(model: FragmentDetector, samples: Sequence[GraphSample], threshold: float = 0.5) -> Metrics:
    """Micro-averaged confusion over labeled layer nodes; fragmented is positive."""
    preds, actual = [], []
    for s in samples:
        p = predict(model, s, threshold)
        preds.append(p[s.mask])
        actual.append(s.labels[s.mask].astype(bool))
    if not preds:
        return Metrics.from_predictions([], [])
    return Metrics.from_predictions(np.concatenate(preds), np.concatenate(actual))


def sample_loss(model: FragmentDetector, sample: GraphSample, class_weights=None) -> T.Tensor:
    logits = model(sample)
    return T.cross_entropy(logits, sample.labels, sample.mask, class_weights)


def mean_loss(model: FragmentDetector, samples: Sequence[GraphSample], class_weights=None) -> float:
    if not samples:
        return float("nan")
    return float(np.mean([float(sample_loss(model, s, class_weights).data) for s in samples]))


def train(train_set: Sequence[GraphSample], val_set: Sequence[GraphSample], config: TrainConfig,
          progress: bool = False, stop: Callable[[FragmentDetector, dict], bool] | None = None) -> TrainResult:
    """Per-graph Adam steps with plateau LR decay; keeps the best-validation-F1 weights.

    ``stop`` is called after every epoch with the live model and history row;
    returning true ends training early.
    """
    if not train_set:
        raise ValueError("empty training split")
    if not val_set:
        raise ValueError("empty validation split")
    if not any(s.labels[s.mask].any() for s in train_set):
        raise ValueError("degenerate training split: no fragmented layers")
    model = FragmentDetector(config.model_config(), seed=config.seed)
    adam = AdamState(lr=config.lr)
    schedule = PlateauSchedule(lr=config.lr, patience=config.patience, floor=config.min_lr)
    order_rng = np.random.default_rng([config.seed, 1])
    weights = np.asarray(config.class_weights) if config.class_weights else None
    params = model.params

    best_state = model.state()
    best_f1, best_epoch = -1.0, 0
    history: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        lr_used = adam.lr
        losses = []
        for idx in order_rng.permutation(len(train_set)):
            model.zero_grad()
            with T.Tape() as tape:
                loss = sample_loss(model, train_set[idx], weights)
            tape.backward(loss)
            adam_step(params, adam)
            losses.append(float(loss.data))
        val_loss = mean_loss(model, val_set, weights)
        metrics = evaluate(model, val_set, config.threshold)
        adam.lr = schedule.update(val_loss)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
            "val_precision": metrics.precision,
            "val_recall": metrics.recall,
            "val_accuracy": metrics.accuracy,
            "val_f1": metrics.f1,
            "lr": lr_used,
        }
        history.append(row)
        if metrics.f1 > best_f1:
            best_f1, best_epoch = metrics.f1, epoch
            best_state = model.state()
        if progress:
            log.info("epoch %d loss %.4f val_loss %.4f val_f1 %.4f lr %.2e (%.1fs)", epoch, row["train_loss"],
                     val_loss, metrics.f1, lr_used, time.perf_counter() - started)
        if stop is not None and stop(model, row):
            break
    model.load_state(best_state)
    return TrainResult(model, history, best_epoch, adam, schedule, config)


# ---------------------------------------------------------------- files

def history_csv(history: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_FIELDS)
    for row in history:
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in HISTORY_FIELDS])
    return buf.getvalue()


def save_checkpoint(path, model: FragmentDetector, *, seed: int = 0, flags: dict | None = None,
                    adam: AdamState | None = None, extra: dict | None = None) -> None:
    tensors = model.state()
    meta = {
        "format": "fraglayer-checkpoint",
        "version": 1,
        "arch": model.config.to_dict(),
        "dims": {name: list(arr.shape) for name, arr in tensors.items()},
        "flags": flags or {},
        "seed": seed,
    }
    if adam is not None:
        meta["adam"] = {"t": adam.t, "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps}
        for name in tensors.copy():
            if name in adam.m:
                tensors[f"adam.m.{name}"] = adam.m[name]
                tensors[f"adam.v.{name}"] = adam.v[name]
    if extra:
        meta.update(extra)
    ckpt.save(path, tensors, meta)


def load_checkpoint(path) -> tuple[FragmentDetector, dict, AdamState | None]:
    tensors, meta = ckpt.load(path)
    if meta.get("format") != "fraglayer-checkpoint":
        raise ckpt.CheckpointError(f"{path}: not a detector checkpoint")
    config = ModelConfig.from_dict(meta["arch"])
    model = FragmentDetector(config, seed=meta.get("seed", 0))
    weights = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    try:
        model.load_state(weights)
    except ValueError as exc:
        raise ckpt.CheckpointError(f"{path}: {exc}") from None
    adam = None
    if "adam" in meta:
        a = meta["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], t=a["t"])
        for k, v in tensors.items():
            if k.startswith("adam.m."):
                adam.m[k[len("adam.m."):]] = v.copy()
            elif k.startswith("adam.v."):
                adam.v[k[len("adam.v."):]] = v.copy()
    return model, meta, adam


def write_text(path, text: str) -> None:
    ckpt.atomic_write(Path(path), text.encode("utf-8"))
