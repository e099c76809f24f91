"""Minimal reverse-mode autodiff over float64 NumPy arrays.

A :class:`Tensor` records the operation that produced it; :meth:`Tensor.backward`
walks the recorded graph in reverse topological order and accumulates ``.grad``
on every tensor that requires it. Only the handful of operations the policy
needs are provided. Tensors built solely from constants record nothing, so
inference code pays no bookkeeping cost.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_ufunc__ = None  # make ndarray (op) Tensor defer to the reflected Tensor method

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b):
    """``a @ b`` for a of shape (..., n, k) and a 2-D ``b`` of shape (k, m)."""
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward)


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, index):
    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _make(a.data[index], (a,), backward)


def take_rows(a, idx):
    """Gather rows ``a[idx]``; the backward pass scatter-adds into ``a``."""
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]
    return _make(
        a.data[idx],
        (a,),
        lambda g: (kernels.segment_sum(g, idx, n),),
    )


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def tensor_sum(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tensor_mean(a, axis=None):
    count = a.data.size if axis is None else a.shape[axis]
    return mul(tensor_sum(a, axis=axis), 1.0 / count)


def elu(x):
    """ELU with unit scale; the derivative at exactly 0 is taken as 1."""
    x = as_tensor(x)
    em1 = np.expm1(np.minimum(x.data, 0.0))
    out = np.maximum(x.data, em1)  # expm1(x) > x for x < 0
    em1 += 1.0  # now the derivative, exactly 1 where x >= 0
    return _make(out, (x,), lambda g: (g * em1,))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    neg = x.data < 0.0
    scale = np.where(neg, slope, 1.0)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))


def max_pool(x):
    """Max over axis -2 of a (..., n, d) tensor; gradient routes to the first maximiser."""
    x = as_tensor(x)
    arg = np.argmax(x.data, axis=-2)
    out = np.take_along_axis(x.data, arg[..., None, :], axis=-2)[..., 0, :]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg[..., None, :], g[..., None, :], axis=-2)
        return (gx,)

    return _make(out, (x,), backward)


def segment_sum(values, seg, num_segments):
    values = as_tensor(values)
    seg = np.asarray(seg, dtype=np.int64)
    return _make(
        kernels.segment_sum(values.data, seg, num_segments),
        (values,),
        lambda g: (g[seg],),
    )


def segment_softmax(logits, seg, num_segments):
    """Softmax of ``logits`` (E or E x H) within groups sharing a segment id.

    The per-segment maximum is subtracted before exponentiating. A segment with
    no members raises ``ValueError('empty neighborhood')``.
    """
    logits = as_tensor(logits)
    seg = np.asarray(seg, dtype=np.int64)
    if seg.shape[0] != logits.shape[0]:
        raise ValueError("segment ids and logits differ in length")
    counts = np.bincount(seg, minlength=num_segments)
    if counts.shape[0] > num_segments or np.any(counts[:num_segments] == 0):
        raise ValueError("empty neighborhood")
    flat = logits.data.reshape(logits.shape[0], -1)
    shift = kernels.segment_max(flat, seg, num_segments)
    ex = np.exp(flat - shift[seg])
    total = kernels.segment_sum(ex, seg, num_segments)
    out = (ex / total[seg]).reshape(logits.shape)

    def backward(g):
        gf = g.reshape(flat.shape)
        of = out.reshape(flat.shape)
        dot = kernels.segment_sum(of * gf, seg, num_segments)
        return ((of * (gf - dot[seg])).reshape(logits.shape),)

    return _make(out, (logits,), backward)


def mse(a, b):
    """Mean of squared differences over every element."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return tensor_mean(diff * diff)


# ---------------------------------------------------------------------------
# parameters, optimisation, randomness


class ParamStore:
    """Named trainable tensors. Gradients live on each tensor's ``.grad``."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name, value):
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._tensors[name] = t
        return t

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self):
        return list(self._tensors)

    def grad(self, name):
        t = self._tensors[name]
        return np.zeros_like(t.data) if t.grad is None else t.grad

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def state(self):
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def load_state(self, state):
        missing = set(self._tensors) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, t in self._tensors.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.copy()

    def count(self):
        return sum(t.data.size for t in self._tensors.values())


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update over every parameter, then clear gradients."""
    for name, t in params.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
    state.step += 1
    b1, b2 = betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, t in params.items():
        g = params.grad(name)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data = t.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    params.zero_grad()
    return state


def _key_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode())


def rng(seed, *keys):
    """Counter-based generator (Philox) for the stream named by ``seed`` and ``keys``.

    The same arguments give the same draws on every platform and no stream
    depends on how many draws another stream has made.
    """
    entropy = [_key_int(seed)] + [_key_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_err: dict
    probes: dict
    tolerance: float

    @property
    def worst(self):
        return max(self.max_rel_err.values()) if self.max_rel_err else 0.0

    def failing(self):
        return {k: v for k, v in self.max_rel_err.items() if not v < self.tolerance}

    @property
    def ok(self):
        return not self.failing()


def gradient_check(loss_fn, params, h=1e-5, samples=100, seed=0, names=None,
                   tolerance=1e-4, analytic=None):
    """Compare reverse-mode gradients of ``loss_fn()`` with central differences.

    ``samples`` coordinates are drawn per parameter (with replacement when a
    parameter is smaller). Errors are reported per parameter as
    ``|a - n| / max(|a|, |n|, 1e-8)``. ``analytic`` may supply precomputed
    gradients by name, which is how a corrupted gradient is exercised.
    """
    names = list(params.names() if names is None else names)
    params.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("loss is not finite")
    if analytic is None:
        loss.backward()
        analytic = {n: params.grad(n).copy() for n in names}
    params.zero_grad()
    gen = rng(seed, "gradcheck")
    errs, probes = {}, {}
    for name in names:
        t = params[name]
        size = t.data.size
        coords = gen.choice(size, size=samples, replace=size < samples)
        worst = 0.0
        for c in coords:
            flat = t.data.reshape(-1)
            orig = flat[c]
            flat[c] = orig + h
            up = loss_fn().item()
            flat[c] = orig - h
            down = loss_fn().item()
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError("loss is not finite")
            num = (up - down) / (2 * h)
            ana = analytic[name].reshape(-1)[c]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
        errs[name] = worst
        probes[name] = len(coords)
    return GradCheckReport(errs, probes, tolerance)
