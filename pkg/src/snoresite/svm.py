"""One-vs-rest linear SVM trained with a Pegasos-style stochastic subgradient method."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import canonical_classes, parse_label


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-4
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class LinearSvmModel:
    classes: list
    weights: np.ndarray  # (n_classes, dims)
    biases: np.ndarray   # (n_classes,)
    config: SvmConfig = field(default_factory=SvmConfig)
    objective_history: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"classes": [str(c) for c in self.classes], "lambda": self.config.lam,
                           "epochs": self.config.epochs, "seed": self.config.seed,
                           "weights": self.weights.tolist(), "biases": self.biases.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "LinearSvmModel":
        d = json.loads(text)
        cfg = SvmConfig(float(d["lambda"]), int(d["epochs"]), int(d["seed"]))
        return cls([parse_label(c) for c in d["classes"]], np.asarray(d["weights"], dtype=np.float64),
                   np.asarray(d["biases"], dtype=np.float64), cfg)


def hinge_loss(margin):
    return np.maximum(0.0, 1.0 - np.asarray(margin, dtype=np.float64))


def objective(w, b, X, y, lam) -> float:
    """lam/2 (|w|^2 + b^2) + mean hinge; the bias is carried as a regularized constant feature."""
    margins = y * (X @ w + b)
    return 0.5 * lam * (w @ w + b * b) + float(hinge_loss(margins).mean())


def sample_loss_grad(w, b, x, y, lam):
    """Per-sample regularized loss and its subgradient w.r.t. (w, b)."""
    margin = y * (x @ w + b)
    loss = 0.5 * lam * (w @ w + b * b) + max(0.0, 1.0 - margin)
    active = margin < 1.0
    gw = lam * w - (y * x if active else 0.0)
    gb = lam * b - (y if active else 0.0)
    return loss, gw, gb


def _pegasos_binary(X, y, cfg, rng):
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])  # bias as an extra, regularized coordinate
    w = np.zeros(d + 1)
    t = 0
    history = []
    for _ in range(cfg.epochs):
        avg = np.zeros(d + 1)
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (cfg.lam * t)
            margin = y[i] * (Xa[i] @ w)
            w *= 1.0 - eta * cfg.lam
            if margin < 1.0:
                w += eta * y[i] * Xa[i]
            avg += w
        avg /= n
        history.append(objective(avg[:-1], avg[-1], X, y, cfg.lam))
    # the model is the iterate averaged over the last epoch
    return avg[:-1], float(avg[-1]), history


def svm_train(X, y, cfg: SvmConfig = SvmConfig()) -> LinearSvmModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be (n, dims) with one label per row")
    classes = canonical_classes(y)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(cfg.seed)
    weights = np.zeros((len(classes), X.shape[1]))
    biases = np.zeros(len(classes))
    history = {}
    for k, c in enumerate(classes):
        target = np.array([1.0 if l == c else -1.0 for l in y])
        weights[k], biases[k], history[str(c)] = _pegasos_binary(X, target, cfg, rng)
    return LinearSvmModel(classes, weights, biases, cfg, history)


def svm_decision(model: LinearSvmModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.weights.shape[1]:
        raise ValueError(f"input has {x.shape[-1]} dims, model expects {model.weights.shape[1]}")
    return x @ model.weights.T + model.biases


def svm_predict(model: LinearSvmModel, x):
    """Argmax label (first class in canonical order on ties); batches give a list."""
    scores = svm_decision(model, x)
    if scores.ndim == 1:
        return model.classes[int(np.argmax(scores))]
    return [model.classes[int(k)] for k in np.argmax(scores, axis=1)]
