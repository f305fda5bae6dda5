"""Layers with explicit backward passes.  Image tensors are NHWC."""

from __future__ import annotations

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view


class Module:
    """Base: ``params``/``grads`` hold trainable arrays, ``buffers`` non-trainable state."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self.children = {}

    def add(self, name, module):
        self.children[name] = module
        return module

    def named_parameters(self, prefix=""):
        for k, v in self.params.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_grads(self, prefix=""):
        for k in self.params:
            yield prefix + k, self.grads.get(k)
        for name, child in self.children.items():
            yield from child.named_grads(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for k, v in self.buffers.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameter_count(self):
        return sum(v.size for _, v in self.named_parameters())

    def state(self):
        """Copy of every parameter and buffer, keyed by dotted name."""
        out = {k: v.copy() for k, v in self.named_parameters()}
        out.update({k: v.copy() for k, v in self.named_buffers()})
        return out

    def load_state(self, state):
        for k, v in list(self.named_parameters()) + list(self.named_buffers()):
            src = np.asarray(state[k])
            if src.shape != v.shape:
                raise ValueError(f"{k}: shape {src.shape} != {v.shape}")
            v[...] = src

    def astype(self, dtype):
        for k in list(self.params):
            self.params[k] = self.params[k].astype(dtype)
        for k in list(self.buffers):
            self.buffers[k] = self.buffers[k].astype(dtype)
        for child in self.children.values():
            child.astype(dtype)
        return self


def he_normal(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Dense(Module):
    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["W"] = he_normal(rng, (n_in, n_out), n_in)
        self.params["b"] = np.zeros(n_out)

    def forward(self, x, train=True):
        W = self.params["W"]
        if x.shape[-1] != W.shape[0]:
            raise ValueError(f"dense input width {x.shape[-1]} != {W.shape[0]}")
        self._x = x
        return x @ W + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


def conv_output_size(size, k, stride, pad):
    out = (size + 2 * pad - k) // stride + 1
    if out < 1:
        raise ValueError(f"kernel {k} with stride {stride}, pad {pad} does not fit size {size}")
    return out


class Conv2d(Module):
    """Cross-correlation with zero padding; weights (out, in, k, k), no bias."""

    def __init__(self, c_in, c_out, k, stride=1, pad=0, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.k, self.stride, self.pad = k, stride, pad
        self.params["W"] = he_normal(rng, (c_out, c_in, k, k), c_in * k * k)

    def _cols(self, x):
        n, h, w, c = x.shape
        k, s, p = self.k, self.stride, self.pad
        ho, wo = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
        if k == 1 and p == 0:
            cols = x[:, ::s, ::s, :][:, :ho, :wo, :]
            return np.ascontiguousarray(cols).reshape(-1, c), ho, wo
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
        return win.reshape(n * ho * wo, c * k * k), ho, wo

    def forward(self, x, train=True):
        W = self.params["W"]
        if x.ndim != 4 or x.shape[3] != W.shape[1]:
            raise ValueError(f"conv expects NHWC input with {W.shape[1]} channels, got {x.shape}")
        cols, ho, wo = self._cols(x)
        self._cache = (x.shape, cols, ho, wo)
        y = cols @ W.reshape(W.shape[0], -1).T
        return y.reshape(x.shape[0], ho, wo, W.shape[0])

    def backward(self, dy):
        (n, h, w, c), cols, ho, wo = self._cache
        W = self.params["W"]
        k, s, p = self.k, self.stride, self.pad
        dyf = dy.reshape(-1, W.shape[0])
        self.grads["W"] = (dyf.T @ cols).reshape(W.shape)
        dcols = dyf @ W.reshape(W.shape[0], -1)
        if k == 1 and p == 0:
            if s == 1:
                return dcols.reshape(n, h, w, c)
            dx = np.zeros((n, h, w, c), dtype=dy.dtype)
            dx[:, ::s, ::s, :][:, :ho, :wo, :] = dcols.reshape(n, ho, wo, c)
            return dx
        dcols = dcols.reshape(n, ho, wo, c, k, k)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += dcols[..., i, j]
        return dxp[:, p:p + h, p:p + w, :] if p else dxp


class BatchNorm(Module):
    """Normalizes the last axis; batch statistics in train mode, running ones in eval."""

    def __init__(self, channels, eps=1e-5, momentum=0.9):
        super().__init__()
        self.eps, self.momentum = eps, momentum
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x, train=True):
        axes = tuple(range(x.ndim - 1))
        gamma, beta = self.params["gamma"], self.params["beta"]
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch norm needs a batch of at least 2 in train mode")
            m = x.size // x.shape[-1]
            mu = x.mean(axis=axes)
            xc = x - mu
            var = np.mean(xc * xc, axis=axes)
            mom = self.momentum
            self.buffers["running_mean"] *= mom
            self.buffers["running_mean"] += (1 - mom) * mu
            self.buffers["running_var"] *= mom
            self.buffers["running_var"] += (1 - mom) * var * m / (m - 1)
        else:
            xc = x - self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv
        self._cache = (xhat, inv, train, axes)
        return gamma * xhat + beta

    def backward(self, dy):
        xhat, inv, train, axes = self._cache
        gamma = self.params["gamma"]
        self.grads["gamma"] = np.sum(dy * xhat, axis=axes)
        self.grads["beta"] = dy.sum(axis=axes)
        dxhat = dy * gamma
        if not train:
            return dxhat * inv
        m = dy.size // dy.shape[-1]
        return inv / m * (m * dxhat - dxhat.sum(axis=axes)
                          - xhat * np.sum(dxhat * xhat, axis=axes))


class ReLU(Module):
    def forward(self, x, train=True):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class MaxPool2d(Module):
    def __init__(self, k=3, stride=2, pad=1):
        super().__init__()
        self.k, self.stride, self.pad = k, stride, pad

    def forward(self, x, train=True):
        n, h, w, c = x.shape
        k, s, p = self.k, self.stride, self.pad
        ho, wo = conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)), constant_values=-np.inf) if p else x
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
        win = win.reshape(n, ho, wo, c, k * k)
        arg = win.argmax(axis=-1)
        self._cache = (x.shape, arg, ho, wo)
        return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        (n, h, w, c), arg, ho, wo = self._cache
        k, s, p = self.k, self.stride, self.pad
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += dy * (arg == i * k + j)
        return dxp[:, p:p + h, p:p + w, :]


class GlobalAvgPool(Module):
    def forward(self, x, train=True):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        n, h, w, c = self._shape
        return np.broadcast_to(dy[:, None, None, :] / (h * w), self._shape).copy()


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            self.add(str(i), layer)

    def forward(self, x, train=True):
        for layer in self.children.values():
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(list(self.children.values())):
            dy = layer.backward(dy)
        return dy
