"""Adam with coupled weight decay and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One in-place Adam update.

    Weight decay is added to the gradient before the moment updates
    (``g + weight_decay * w``), not applied to the weights directly.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros(p.shape, dtype=np.float64) for p in params]
        state.v = [np.zeros(p.shape, dtype=np.float64) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        g = g.astype(np.float64) + state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= update.astype(p.dtype)


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement.

    An epoch improves when its loss is strictly below the best seen so far.
    The counter resets on improvement and after each reduction.
    """

    patience: int = 100
    factor: float = 0.1
    best: float = math.inf
    bad_epochs: int = 0
    history: list = field(default_factory=list)

    def step(self, loss: float, state: AdamState) -> float:
        if not math.isfinite(loss):
            raise ValueError(f"non-finite loss {loss}")
        self.history.append(loss)
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                state.lr *= self.factor
                self.bad_epochs = 0
        return state.lr


def scheduler_step(scheduler: PlateauScheduler, epoch_loss: float, state: AdamState) -> float:
    return scheduler.step(epoch_loss, state)
