"""Softmax cross-entropy."""

from __future__ import annotations

import numpy as np


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, targets):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    ``logits`` is (N, K); ``targets`` holds N class indices.
    """
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, k = logits.shape
    if targets.shape != (n,) or targets.min() < 0 or targets.max() >= k:
        raise ValueError("targets must be N class indices in [0, K)")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), targets]))
    grad = np.exp(z - logsum[:, None])
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n
