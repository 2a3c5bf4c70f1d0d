from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """Bias-corrected Adam update in place, using each parameter's ``grad``.

    Parameters without a gradient are left untouched. A non-finite gradient
    aborts the step before anything is modified.
    """
    live = {name: p for name, p in params.items() if p.grad is not None}
    for name, p in live.items():
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, p in live.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        denom = np.sqrt(v / corr2)
        denom += state.eps
        step = m / denom
        step *= state.lr / corr1
        p.data -= step.astype(p.data.dtype, copy=False)


@dataclass
class PlateauSchedule:
    """Halve the learning rate after ``patience`` epochs without improvement."""

    lr: float = 1e-3
    patience: int = 10
    factor: float = 0.5
    floor: float = 1e-6
    threshold: float = 1e-5
    best: float = float("inf")
    stale: int = 0

    def update(self, val_loss: float) -> float:
        if val_loss < self.best - self.threshold:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr = max(self.floor, self.lr * self.factor)
                self.stale = 0
        return self.lr


def plateau_update(schedule: PlateauSchedule, val_loss: float) -> float:
    return schedule.update(val_loss)
