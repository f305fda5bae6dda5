"""Bottleneck residual network over single-channel Mel-spectrograms."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import (BatchNorm, Conv2d, Dense, GlobalAvgPool, MaxPool2d, Module, ReLU,
                     Sequential)

EXPANSION = 4


@dataclass(frozen=True)
class ResNetConfig:
    blocks: tuple = (3, 4, 6, 3)
    width: int = 8
    n_classes: int = 9
    in_channels: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        if not self.blocks or min(self.blocks) < 1 or self.width < 1:
            raise ValueError("block counts and width must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["blocks"] = list(self.blocks)
        return d


class Bottleneck(Module):
    """relu(F(x) + shortcut(x)); F = 1x1-BN-relu, 3x3(stride)-BN-relu, 1x1-BN."""

    def __init__(self, c_in, mid, stride=1, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        c_out = mid * EXPANSION
        self.conv1 = self.add("conv1", Conv2d(c_in, mid, 1, rng=rng))
        self.bn1 = self.add("bn1", BatchNorm(mid))
        self.relu1 = ReLU()
        self.conv2 = self.add("conv2", Conv2d(mid, mid, 3, stride, 1, rng=rng))
        self.bn2 = self.add("bn2", BatchNorm(mid))
        self.relu2 = ReLU()
        self.conv3 = self.add("conv3", Conv2d(mid, c_out, 1, rng=rng))
        self.bn3 = self.add("bn3", BatchNorm(c_out))
        self.shortcut = None
        if stride != 1 or c_in != c_out:
            self.shortcut = self.add("shortcut", Sequential(Conv2d(c_in, c_out, 1, stride, rng=rng),
                                                            BatchNorm(c_out)))
        self.relu_out = ReLU()

    def forward(self, x, train=True):
        y = self.relu1.forward(self.bn1.forward(self.conv1.forward(x, train), train))
        y = self.relu2.forward(self.bn2.forward(self.conv2.forward(y, train), train))
        y = self.bn3.forward(self.conv3.forward(y, train), train)
        sc = x if self.shortcut is None else self.shortcut.forward(x, train)
        if sc.shape != y.shape:
            raise ValueError(f"residual shapes disagree: {sc.shape} vs {y.shape}")
        return self.relu_out.forward(y + sc)

    def backward(self, dy):
        dy = self.relu_out.backward(dy)
        dx_sc = dy if self.shortcut is None else self.shortcut.backward(dy)
        d = self.conv3.backward(self.bn3.backward(dy))
        d = self.conv2.backward(self.bn2.backward(self.relu2.backward(d)))
        d = self.conv1.backward(self.bn1.backward(self.relu1.backward(d)))
        return d + dx_sc


class ResNet(Module):
    """Stem conv7x7/2 + maxpool3x3/2, bottleneck stages, global pool, dense head."""

    def __init__(self, cfg: ResNetConfig = ResNetConfig()):
        super().__init__()
        self.cfg = cfg
        self.config = cfg.to_dict()
        rng = np.random.default_rng(cfg.seed)
        w = cfg.width
        self.stem = self.add("stem", Sequential(Conv2d(cfg.in_channels, w, 7, 2, 3, rng=rng),
                                                BatchNorm(w), ReLU(), MaxPool2d(3, 2, 1)))
        blocks = []
        c_in = w
        for stage, count in enumerate(cfg.blocks):
            mid = w * 2 ** stage
            for j in range(count):
                stride = 2 if (stage > 0 and j == 0) else 1
                blocks.append(Bottleneck(c_in, mid, stride, rng))
                c_in = mid * EXPANSION
        self.body = self.add("body", Sequential(*blocks))
        self.pool = GlobalAvgPool()
        self.head = self.add("head", Dense(c_in, cfg.n_classes, rng))

    def forward(self, x, train=True):
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[-1] != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels} input channel(s), got shape {x.shape}")
        y = self.body.forward(self.stem.forward(x, train), train)
        return self.head.forward(self.pool.forward(y, train), train)

    def backward(self, dlogits):
        d = self.pool.backward(self.head.backward(dlogits))
        return self.stem.backward(self.body.backward(d))[..., 0]


def resnet_parameter_count(cfg: ResNetConfig) -> int:
    """Closed-form trainable parameter count (conv weights, BN scale/shift, head)."""
    w, k = cfg.width, cfg.n_classes
    total = 49 * cfg.in_channels * w + 2 * w
    c_in = w
    for stage, count in enumerate(cfg.blocks):
        m = w * 2 ** stage
        for j in range(count):
            total += c_in * m + 9 * m * m + 4 * m * m + 2 * (m + m + 4 * m)
            if (stage > 0 and j == 0) or c_in != 4 * m:
                total += c_in * 4 * m + 8 * m
            c_in = 4 * m
    return total + c_in * k + k
