"""LSTM cell, sequence LSTM and the bidirectional many-to-one classifier."""

from __future__ import annotations

import numpy as np

from .layers import Dense, Module


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _gates(z, c_prev):
    h4 = z.shape[-1] // 4
    i = sigmoid(z[..., :h4])
    f = sigmoid(z[..., h4:2 * h4])
    g = np.tanh(z[..., 2 * h4:3 * h4])
    o = sigmoid(z[..., 3 * h4:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return o * tc, c, (i, f, g, o, c_prev, tc)


def _gates_backward(dh, dc, cache):
    """Back through the gate nonlinearities: returns (dz, dc_prev)."""
    i, f, g, o, c_prev, tc = cache
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dc * i * (1.0 - g * g),
        dh * tc * o * (1.0 - o),
    ], axis=-1)
    return dz, dc * f


def lstm_cell(x_t, h_prev, c_prev, params):
    """One step.  ``params`` has Wx (D, 4H), Wh (H, 4H), b (4H); gate order i, f, g, o.

    Returns ``(h_t, c_t, cache)``; pass the cache to :func:`lstm_cell_backward`.
    """
    Wx, Wh, b = params["Wx"], params["Wh"], params["b"]
    if x_t.shape[-1] != Wx.shape[0] or h_prev.shape[-1] != Wh.shape[0]:
        raise ValueError("lstm_cell: input or state width does not match the weights")
    z = x_t @ Wx + h_prev @ Wh + b
    h, c, gate_cache = _gates(z, c_prev)
    return h, c, (x_t, h_prev, gate_cache)


def lstm_cell_backward(dh, dc, cache, params):
    """Returns ``(dx, dh_prev, dc_prev, grads)`` for one step."""
    x_t, h_prev, gate_cache = cache
    dz, dc_prev = _gates_backward(dh, dc, gate_cache)
    x2, h2, dz2 = np.atleast_2d(x_t), np.atleast_2d(h_prev), np.atleast_2d(dz)
    grads = {"Wx": x2.T @ dz2, "Wh": h2.T @ dz2, "b": dz2.sum(axis=0)}
    return dz @ params["Wx"].T, dz @ params["Wh"].T, dc_prev, grads


class LSTM(Module):
    """Runs over (N, T, D) and returns the last hidden state (N, H)."""

    def __init__(self, n_in, hidden, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        lim = 1.0 / np.sqrt(hidden)
        self.hidden = hidden
        self.params["Wx"] = rng.uniform(-lim, lim, (n_in, 4 * hidden))
        self.params["Wh"] = rng.uniform(-lim, lim, (hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0  # forget gate
        self.params["b"] = b

    def forward(self, x, train=True):
        n, t, d = x.shape
        Wx, Wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        if d != Wx.shape[0]:
            raise ValueError(f"LSTM expects feature width {Wx.shape[0]}, got {d}")
        xw = (x.reshape(n * t, d) @ Wx + b).reshape(n, t, -1)
        h = np.zeros((n, self.hidden), dtype=x.dtype)
        c = np.zeros_like(h)
        hs, caches = [], []
        for step in range(t):
            hs.append(h)
            h, c, cache = _gates(xw[:, step] + h @ Wh, c)
            caches.append(cache)
        self._cache = (x, hs, caches)
        return h

    def backward(self, dh):
        x, hs, caches = self._cache
        n, t, d = x.shape
        Wh = self.params["Wh"]
        dz_all = np.empty((n, t, 4 * self.hidden), dtype=dh.dtype)
        dc = np.zeros_like(dh)
        for step in range(t - 1, -1, -1):
            dz, dc = _gates_backward(dh, dc, caches[step])
            dz_all[:, step] = dz
            dh = dz @ Wh.T
        hprev = np.stack(hs, axis=1).reshape(n * t, -1)
        dzf = dz_all.reshape(n * t, -1)
        self.grads["Wx"] = x.reshape(n * t, d).T @ dzf
        self.grads["Wh"] = hprev.T @ dzf
        self.grads["b"] = dzf.sum(axis=0)
        return (dzf @ self.params["Wx"].T).reshape(n, t, d)


class BiLSTMClassifier(Module):
    """Forward and time-reversed LSTMs; last states concatenated into a dense head."""

    def __init__(self, n_in=39, hidden=64, n_classes=9, seed=0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.config = {"n_in": n_in, "hidden": hidden, "n_classes": n_classes, "seed": seed}
        self.fwd = self.add("fwd", LSTM(n_in, hidden, rng))
        self.bwd = self.add("bwd", LSTM(n_in, hidden, rng))
        self.head = self.add("head", Dense(2 * hidden, n_classes, rng))

    def forward(self, x, train=True):
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        hf = self.fwd.forward(x, train)
        hb = self.bwd.forward(x[:, ::-1], train)
        return self.head.forward(np.concatenate([hf, hb], axis=1), train)

    def backward(self, dlogits):
        dcat = self.head.backward(dlogits)
        h = self.fwd.hidden
        dx = self.fwd.backward(dcat[:, :h])
        return dx + self.bwd.backward(dcat[:, h:])[:, ::-1]
