"""Adam/AdamW stepper with decoupled weight decay, plus early stopping."""

from __future__ import annotations

import numpy as np

from .encoders import GradientTape, Param
from .errors import ShapeMismatch
from .losses import TAU_CLAMP

IMPROVEMENT_EPS = 1e-12


class AdamW:
    """Bias-corrected Adam; decay multiplies parameters by (1 - lr*wd)
    before the Adam delta. decoupled=False falls back to plain Adam and
    ignores weight_decay entirely. Scalar parameters flagged decay=False
    (temperature, bias) are never decayed."""

    def __init__(self, params: list[Param], lr: float = 1e-3,
                 weight_decay: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 decoupled: bool = True):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decoupled = decoupled
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.value) for p in self.params}
        self._v = {p.name: np.zeros_like(p.value) for p in self.params}

    def step(self, tape: GradientTape) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p in self.params:
            g = tape.get(p)
            if g.shape != p.value.shape:
                raise ShapeMismatch(p.name)
            if self.decoupled and self.weight_decay > 0 and p.decay:
                p.value = p.value * (1.0 - self.lr * self.weight_decay)
            m = self._m[p.name] = self.beta1 * self._m[p.name] + (1 - self.beta1) * g
            v = self._v[p.name] = self.beta2 * self._v[p.name] + (1 - self.beta2) * g * g
            p.value = p.value - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if p.name == "scalars.tau":
                p.value = np.clip(p.value, -TAU_CLAMP, TAU_CLAMP)


def adam(params: list[Param], lr: float) -> AdamW:
    """Plain Adam (no weight decay)."""
    return AdamW(params, lr=lr, weight_decay=0.0, decoupled=False)


class EarlyStopper:
    """Stop after `patience` consecutive epochs without strict improvement.

    Improvement means the validation loss drops by more than 1e-12 below the
    best seen so far. Callers snapshot parameters whenever update() reports
    a new best and restore that snapshot when training ends.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = -1
        self._stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best_loss - IMPROVEMENT_EPS:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self._stale = 0
            return False
        self._stale += 1
        return self._stale >= self.patience

    @property
    def improved(self) -> bool:
        return self._stale == 0
