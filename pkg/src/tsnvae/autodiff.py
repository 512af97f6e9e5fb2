"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records every primitive applied to tensors that require gradients,
in execution order (which is already topological).  ``backward`` walks the
records once in reverse, accumulating adjoints into the participating
tensors.  All math is float64; desk-scale networks are small enough that
precision is worth more than speed.

The primitive set is the closure needed by the dense encoder/decoder stacks
and the Gaussian loss terms: affine, leaky-ReLU, sigmoid, exp, add, sub,
mul, sum, reshape, 2-D average pooling, concatenate, plus row gathering
(for batched sequence slicing) and clamp (numerical guard before exp).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "affine",
    "leaky_relu",
    "sigmoid",
    "exp",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "sum_elems",
    "mean_all",
    "reshape",
    "avg_pool2d",
    "concat",
    "gather_rows",
    "clamp",
    "constant",
]


class Tensor:
    """Dense float64 array plus gradient bookkeeping.

    ``grad`` is populated by :func:`backward` for leaf tensors created with
    ``requires_grad=True``; it always has the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    """Wrap an array as a non-differentiable tensor."""
    return Tensor(data, requires_grad=False)


class Tape:
    """Ordered record of primitive applications.

    Nodes are appended at forward time, so the list order is topological by
    construction: every node's inputs were created before the node itself.
    A node is recorded only when its output requires a gradient.
    """

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def record(self, name, inputs, output, backward_fn):
        self.nodes.append((name, inputs, output, backward_fn))

    def __len__(self):
        return len(self.nodes)


def _result(tape: Tape, name, inputs, out_data, backward_fn) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=req)
    if req:
        tape.record(name, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum out broadcast dimensions so ``grad`` matches ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into each requires_grad leaf's ``.grad``.

    The loss must be scalar.  Each recorded node is visited exactly once, in
    reverse tape order; adjoints of intermediate outputs are dropped as soon
    as they have been propagated.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    adjoint = {id(loss): np.ones_like(loss.data)}
    produced = {id(out) for _, _, out, _ in tape.nodes}
    for name, inputs, out, backward_fn in reversed(tape.nodes):
        g = adjoint.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, backward_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in adjoint:
                adjoint[key] = adjoint[key] + gi
            else:
                adjoint[key] = gi
        # leaves keep their entries; intermediate adjoints were popped above
    for _, inputs, _, _ in tape.nodes:
        for t in inputs:
            if t.requires_grad and id(t) not in produced:
                g = adjoint.pop(id(t), None)
                if g is None:
                    continue
                g = np.reshape(g, t.data.shape)
                if t.grad is None:
                    t.grad = g
                else:
                    t.grad = t.grad + g


# ---------------------------------------------------------------------------
# primitives


def affine(tape: Tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for x of shape (batch, n) or (n,), w (n, m), b (m,)."""
    xd, wd, bd = x.data, w.data, b.data
    if wd.ndim != 2:
        raise ValueError(f"affine: weight must be 2-D, got {wd.shape}")
    if xd.shape[-1] != wd.shape[0]:
        raise ValueError(f"affine: input {xd.shape} does not match weight {wd.shape}")
    if bd.shape != (wd.shape[1],):
        raise ValueError(f"affine: bias {bd.shape} does not match weight {wd.shape}")
    out_data = xd @ wd + bd
    need_x, need_w, need_b = x.requires_grad, w.requires_grad, b.requires_grad

    def bwd(g):
        gx = g @ wd.T if need_x else None
        if xd.ndim == 1:
            return gx, np.outer(xd, g) if need_w else None, g if need_b else None
        return gx, xd.T @ g if need_w else None, g.sum(axis=0) if need_b else None

    return _result(tape, "affine", (x, w, b), out_data, bwd)


def leaky_relu(tape: Tape, x: Tensor, slope: float = 0.2) -> Tensor:
    xd = x.data
    out_data = np.where(xd > 0.0, xd, slope * xd)

    def bwd(g):
        return (np.where(xd > 0.0, g, slope * g),)

    return _result(tape, "leaky_relu", (x,), out_data, bwd)


def sigmoid(tape: Tape, x: Tensor) -> Tensor:
    # 0.5 * (tanh(x/2) + 1): overflow-free and a single ufunc pass
    out_data = np.tanh(x.data * 0.5)
    out_data += 1.0
    out_data *= 0.5

    def bwd(g):
        return (g * out_data * (1.0 - out_data),)

    return _result(tape, "sigmoid", (x,), out_data, bwd)


def exp(tape: Tape, x: Tensor) -> Tensor:
    out_data = np.exp(x.data)

    def bwd(g):
        return (g * out_data,)

    return _result(tape, "exp", (x,), out_data, bwd)


def add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ValueError(f"add: shapes {a.data.shape} and {b.data.shape} do not broadcast")

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _result(tape, "add", (a, b), out_data, bwd)


def mul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    try:
        out_data = ad * bd
    except ValueError:
        raise ValueError(f"mul: shapes {ad.shape} and {bd.shape} do not broadcast")
    need_a, need_b = a.requires_grad, b.requires_grad

    def bwd(g):
        return (
            _unbroadcast(g * bd, ad.shape) if need_a else None,
            _unbroadcast(g * ad, bd.shape) if need_b else None,
        )

    return _result(tape, "mul", (a, b), out_data, bwd)


def neg(tape: Tape, x: Tensor) -> Tensor:
    return mul(tape, x, constant(-1.0))


def sub(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data - b.data
    except ValueError:
        raise ValueError(f"sub: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    need_b = b.requires_grad

    def bwd(g):
        return (
            _unbroadcast(g, a.data.shape),
            _unbroadcast(-g, b.data.shape) if need_b else None,
        )

    return _result(tape, "sub", (a, b), out_data, bwd)


def scale(tape: Tape, x: Tensor, factor: float) -> Tensor:
    return mul(tape, x, constant(float(factor)))


def sum_elems(tape: Tape, x: Tensor, axis=None) -> Tensor:
    """Sum over ``axis`` (all elements when None)."""
    xd = x.data
    out_data = xd.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, xd.shape),)
        ge = np.expand_dims(g, axis)
        return (np.broadcast_to(ge, xd.shape),)

    return _result(tape, "sum", (x,), out_data, bwd)


def mean_all(tape: Tape, x: Tensor) -> Tensor:
    return scale(tape, sum_elems(tape, x), 1.0 / x.data.size)


def reshape(tape: Tape, x: Tensor, shape) -> Tensor:
    xd = x.data
    try:
        out_data = xd.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {xd.shape} to {shape}")

    def bwd(g):
        return (g.reshape(xd.shape),)

    return _result(tape, "reshape", (x,), out_data, bwd)


def avg_pool2d(tape: Tape, x: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k average pooling over (..., H, W, C)."""
    xd = x.data
    if xd.ndim < 3:
        raise ValueError(f"avg_pool2d: need (..., H, W, C), got {xd.shape}")
    h, w = xd.shape[-3], xd.shape[-2]
    if h % k or w % k:
        raise ValueError(f"avg_pool2d: {h}x{w} not divisible by {k}")
    lead = xd.shape[:-3]
    c = xd.shape[-1]
    blocks = xd.reshape(lead + (h // k, k, w // k, k, c))
    out_data = blocks.mean(axis=(-4, -2))

    def bwd(g):
        ge = np.expand_dims(np.expand_dims(g, -2), -4)
        return (np.broadcast_to(ge / (k * k), blocks.shape).reshape(xd.shape),)

    return _result(tape, "avg_pool2d", (x,), out_data, bwd)


def concat(tape: Tape, parts, axis: int = 0) -> Tensor:
    parts = tuple(parts)
    datas = [p.data for p in parts]
    try:
        out_data = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ValueError(f"concat: incompatible shapes {[d.shape for d in datas]}")
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(tape, "concat", parts, out_data, bwd)


def gather_rows(tape: Tape, x: Tensor, idx) -> Tensor:
    """Select rows along axis 0; backward scatter-adds into the source."""
    idx = np.asarray(idx, dtype=np.intp)
    xd = x.data
    if idx.size and (idx.min() < 0 or idx.max() >= xd.shape[0]):
        raise ValueError(f"gather_rows: index out of range for {xd.shape[0]} rows")
    out_data = xd[idx]

    def bwd(g):
        acc = np.zeros_like(xd)
        np.add.at(acc, idx, g)
        return (acc,)

    return _result(tape, "gather_rows", (x,), out_data, bwd)


def clamp(tape: Tape, x: Tensor, lo: float, hi: float) -> Tensor:
    """Elementwise clip; gradient passes through the interior only."""
    xd = x.data
    out_data = np.clip(xd, lo, hi)
    inside = (xd > lo) & (xd < hi)

    def bwd(g):
        return (np.where(inside, g, 0.0),)

    return _result(tape, "clamp", (x,), out_data, bwd)
