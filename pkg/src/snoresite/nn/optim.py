"""Seeded training configuration and first-order optimizers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"          # "adam" | "sgd-momentum"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    select_best: bool = True         # keep the epoch with the best validation macro-F1
    momentum: float = 0.9
    clip_norm: float | None = 5.0    # global gradient-norm clip; None disables
    dtype: str = "float32"           # gradient checks run separately in float64

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")

    def to_dict(self):
        return asdict(self)


class SGDMomentum:
    def __init__(self, lr=1e-2, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.state = {}

    def step(self, params, grads):
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
            v = self.state.setdefault(name, np.zeros_like(p))
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.state = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
            m, v = self.state.setdefault(name, (np.zeros_like(p), np.zeros_like(p)))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= scale * m / (np.sqrt(v) + self.eps * np.sqrt(1 - b2 ** self.t))


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.lr)
    return SGDMomentum(cfg.lr, cfg.momentum)
