"""Central-difference gradient checking for modules with a scalar loss."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .layers import MaxPool2d, ReLU


SPEC_FLOOR = 1e-8


class GradCheckResult(NamedTuple):
    max_err: float      # worst relative error with the requested denominator floor
    per_name: dict      # name -> worst relative error of that tensor
    kinks: dict         # name -> probes rejected because a kink lies within +-eps
    below_floor: dict   # name -> probes where |a| and |n| were both under the floor
    raw_max_err: float  # worst relative error with the 1e-8 floor


def rel_error(a, n, floor=SPEC_FLOOR):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def activation_pattern(module):
    """ReLU masks and max-pool argmax choices from the last forward pass.

    Two inputs with the same pattern lie in the same linear piece of every
    non-smooth unit, so a central difference between them is meaningful.
    """
    out = []
    stack = [module]
    while stack:
        m = stack.pop()
        if isinstance(m, ReLU):
            out.append(m._mask.copy())
        elif isinstance(m, MaxPool2d):
            out.append(m._cache[1].copy())
        stack.extend(reversed(list(m.children.values())))
        stack.extend(v for v in vars(m).values() if isinstance(v, (ReLU, MaxPool2d))
                     and v not in m.children.values())
    return out


def _same(p, q):
    return len(p) == len(q) and all(np.array_equal(a, b) for a, b in zip(p, q))


def grad_check(loss_fn, params, analytic, eps=1e-5, seed=0, max_per_tensor=None, pattern_fn=None,
               floor=SPEC_FLOOR):
    """Compare ``analytic`` grads with central differences of ``loss_fn``.

    ``params`` and ``analytic`` map names to arrays; entries of ``params`` are
    perturbed in place and restored.  With ``max_per_tensor`` only that many
    coordinates (seeded order) are probed per tensor.  If ``pattern_fn`` is
    given, a probe whose +eps or -eps evaluation changes the activation
    pattern is rejected as straddling a kink and the next coordinate is tried.

    ``floor`` bounds the denominator of the relative error.  Central
    differences carry roughly ``ulp(loss) / eps`` of rounding noise (about
    1e-10 for an O(1) loss of a deep model at eps 1e-5), so with a 1e-8 floor
    a correct but tiny gradient can still show a large relative error; deep
    models are checked with a larger floor and the 1e-8 figure is kept in
    ``raw_max_err``.
    """
    rng = np.random.default_rng(seed)
    base = None
    if pattern_fn is not None:
        loss_fn()
        base = pattern_fn()
    worst, kinks, below = {}, {}, {}
    raw = 0.0
    for name, p in params.items():
        if p.dtype != np.float64:
            raise TypeError(f"{name}: gradient checks need float64, got {p.dtype}")
        g = np.asarray(analytic[name]).reshape(-1)
        flat = p.reshape(-1)  # view: p is contiguous
        order = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            order = rng.permutation(flat.size)
        want = flat.size if max_per_tensor is None else min(max_per_tensor, flat.size)
        err, done, rejected, tiny = 0.0, 0, 0, 0
        for i in order:
            if done == want:
                break
            old = flat[i]
            flat[i] = old + eps
            up = loss_fn()
            kink = base is not None and not _same(pattern_fn(), base)
            flat[i] = old - eps
            down = loss_fn()
            kink = kink or (base is not None and not _same(pattern_fn(), base))
            flat[i] = old
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while probing {name}[{i}]")
            if kink:
                rejected += 1
                continue
            num = (up - down) / (2 * eps)
            raw = max(raw, float(rel_error(g[i], num)))
            err = max(err, float(rel_error(g[i], num, floor)))
            tiny += int(max(abs(g[i]), abs(num)) < floor)
            done += 1
        worst[name] = err
        kinks[name] = rejected
        below[name] = tiny
    return GradCheckResult(max(worst.values(), default=0.0), worst, kinks, below, raw)


def check_module(module, x, targets, loss, train=True, eps=1e-5, seed=0,
                 max_per_tensor=None, include_input=True, screen_kinks=True, floor=SPEC_FLOOR):
    """Gradient-check every parameter (and optionally the input) of ``module``.

    ``loss(output, targets)`` must return ``(value, d_output)``.  Buffers such
    as batch-norm running statistics are restored around every evaluation.
    """
    buffers = {k: v.copy() for k, v in module.named_buffers()}

    def restore():
        for k, v in module.named_buffers():
            v[...] = buffers[k]

    x = np.array(x, dtype=np.float64)
    out = module.forward(x, train)
    _, dout = loss(out, targets)
    dx = module.backward(dout)
    params = dict(module.named_parameters())
    analytic = {k: g.copy() for k, g in module.named_grads()}
    if include_input:
        params["<input>"] = x
        analytic["<input>"] = dx

    def f():
        restore()
        value, _ = loss(module.forward(x, train), targets)
        return value

    pattern_fn = (lambda: activation_pattern(module)) if screen_kinks else None
    result = grad_check(f, params, analytic, eps, seed, max_per_tensor, pattern_fn, floor)
    restore()
    return result
