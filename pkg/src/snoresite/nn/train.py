"""Mini-batch training loop, batched inference and JSON checkpoints."""

from __future__ import annotations

import json

import numpy as np

from ..metrics import macro_f1
from .losses import softmax_xent
from .lstm import BiLSTMClassifier
from .optim import TrainConfig, make_optimizer
from .resnet import ResNet, ResNetConfig


class DivergenceError(FloatingPointError):
    pass


def clip_gradients(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        for g in grads.values():
            g *= max_norm / total
    return total


def predict_logits(model, X, batch_size=64):
    out = []
    for a in range(0, len(X), batch_size):
        out.append(model.forward(np.asarray(X[a:a + batch_size]), train=False))
    return np.concatenate(out, axis=0)


def fit(model, X, y, X_val=None, y_val=None, cfg: TrainConfig = TrainConfig(), log=None):
    """Train ``model`` on class indices ``y``; returns the per-epoch history.

    With ``cfg.select_best`` and validation data, the weights of the epoch with
    the highest validation macro-F1 are restored at the end (earliest on ties).
    """
    dtype = np.dtype(cfg.dtype)
    model.astype(dtype)
    X = np.asarray(X, dtype=dtype)
    y = np.asarray(y, dtype=np.int64)
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val = np.asarray(X_val, dtype=dtype)
        labels = list(range(model.head.params["b"].size))
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg)
    history = []
    best = (-1.0, None, 0)
    n = len(X)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for a in range(0, n, cfg.batch_size):
            batch = order[a:a + cfg.batch_size]
            if len(batch) < 2:  # batch norm needs two samples
                continue
            logits = model.forward(X[batch], train=True)
            loss, dlogits = softmax_xent(logits, y[batch])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            model.backward(dlogits.astype(dtype, copy=False))
            params = dict(model.named_parameters())
            grads = dict(model.named_grads())
            if cfg.clip_norm:
                clip_gradients(grads, cfg.clip_norm)
            opt.step(params, grads)
            losses.append(loss)
        entry = {"epoch": epoch, "loss": float(np.mean(losses))}
        if has_val:
            pred = predict_logits(model, X_val).argmax(axis=1)
            entry["val_macro_f1"] = macro_f1(y_val, pred, labels)
            if cfg.select_best and entry["val_macro_f1"] > best[0]:
                best = (entry["val_macro_f1"], model.state(), epoch)
        history.append(entry)
        if log is not None:
            log(entry)
    if cfg.select_best and best[1] is not None:
        model.load_state(best[1])
        model.best_epoch, model.best_val_macro_f1 = best[2], best[0]
    else:
        model.best_epoch = cfg.epochs
        model.best_val_macro_f1 = history[-1].get("val_macro_f1", float("nan"))
    return history


def build_model(kind, config):
    if kind == "bilstm":
        return BiLSTMClassifier(**config)
    if kind == "resnet":
        return ResNet(ResNetConfig(**config))
    raise ValueError(f"unknown neural model kind {kind!r}")


def save_checkpoint(model, kind, classes, seed, train_cfg=None) -> str:
    arrays = {k: {"shape": list(v.shape), "data": v.astype(np.float64).ravel().tolist()}
              for k, v in model.state().items()}
    header = {"model_kind": kind, "config": model.config, "seed": seed,
              "epoch": getattr(model, "best_epoch", None),
              "val_macro_f1": getattr(model, "best_val_macro_f1", None),
              "classes": [str(c) for c in classes],
              "train_config": None if train_cfg is None else train_cfg.to_dict()}
    return json.dumps({"header": header, "arrays": arrays}, sort_keys=True)


def load_checkpoint(text):
    """Returns ``(model, header)``."""
    d = json.loads(text)
    header = d["header"]
    model = build_model(header["model_kind"], header["config"])
    state = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
             for k, v in d["arrays"].items()}
    model.load_state(state)
    return model, header
