"""Reverse-mode automatic differentiation over the tensor vocabulary.

Eager graph construction: every operation returns a ``Node`` holding its
float64 value, its parents, and a closure that maps the output gradient
to per-parent gradients. ``backward`` accumulates d(loss)/d(node) into
``node.grad`` for every node reachable from the loss.
"""

from __future__ import annotations

import numpy as np

from . import kernels, tensor
from .tensor import ArgumentError, ShapeError


class Node:
    """A value in the computation graph.

    ``grad`` has the same shape as ``value`` and starts at zero; repeated
    ``backward`` calls without zeroing add their contributions.
    """

    __slots__ = ("value", "grad", "op", "parents", "_backward", "trainable", "name")

    def __init__(self, value, op="leaf", parents=(), backward=None, trainable=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.op = op
        self.parents = tuple(parents)
        self._backward = backward
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.shape), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.value.shape})"


def _wrap(x, shape=None):
    if isinstance(x, Node):
        return x
    a = np.asarray(x, dtype=np.float64)
    if shape is not None and a.ndim == 0:
        a = np.full(shape, float(a))
    return Node(a)


def constant(value, name=None) -> Node:
    return Node(value, name=name)


def parameter(value, name) -> Node:
    return Node(value, trainable=True, name=name)


def add(a: Node, b) -> Node:
    b = _wrap(b, a.shape)
    tensor._binary_shapes(a.value, b.value)
    return Node(a.value + b.value, "add", (a, b), lambda g: (g, g))


def sub(a: Node, b) -> Node:
    b = _wrap(b, a.shape)
    tensor._binary_shapes(a.value, b.value)
    return Node(a.value - b.value, "sub", (a, b), lambda g: (g, -g))


def mul(a: Node, b) -> Node:
    b = _wrap(b, a.shape)
    tensor._binary_shapes(a.value, b.value)
    return Node(a.value * b.value, "mul", (a, b),
                lambda g: (g * b.value, g * a.value))


def scale(a: Node, s: float) -> Node:
    return Node(a.value * s, "scale", (a,), lambda g: (g * s,))


def matmul(a: Node, b: Node) -> Node:
    out = tensor.matmul(a.value, b.value)
    return Node(out, "matmul", (a, b),
                lambda g: (g @ b.value.T, a.value.T @ g))


def softmax_rows(a: Node) -> Node:
    y = tensor.softmax_rows(a.value)

    def bw(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return Node(y, "softmax_rows", (a,), bw)


def conv2d(x: Node, w: Node, b: Node, stride: int = 1, padding: int = 0) -> Node:
    out = tensor.conv2d(x.value, w.value, b.value, stride, padding)

    def bw(g):
        gx, gw, gb = kernels.conv2d_backward(
            x.value, w.value, stride, padding, np.ascontiguousarray(g))
        return gx, gw, gb

    return Node(out, "conv2d", (x, w, b), bw)


def grid_sample(x: Node, grid: Node) -> Node:
    """Differentiable w.r.t. BOTH the image and the grid coordinates."""
    out = tensor.grid_sample(x.value, grid.value)

    def bw(g):
        gx, gg = kernels.grid_sample_backward(
            x.value, grid.value, np.ascontiguousarray(g))
        return gx, gg

    return Node(out, "grid_sample", (x, grid), bw)


def reshape(a: Node, shape) -> Node:
    out = tensor.reshape(a.value, shape)
    orig = a.value.shape
    return Node(out, "reshape", (a,), lambda g: (g.reshape(orig),))


def permute(a: Node, axes) -> Node:
    out = tensor.permute(a.value, axes)
    inv = np.argsort(axes)
    return Node(out, "permute", (a,), lambda g: (g.transpose(inv),))


def concat_channels(parts) -> Node:
    out = tensor.concat_channels([p.value for p in parts])
    sizes = [p.value.shape[0] for p in parts]

    def bw(g):
        splits = []
        at = 0
        for s in sizes:
            splits.append(g[at : at + s])
            at += s
        return tuple(splits)

    return Node(out, "concat_channels", tuple(parts), bw)


def crop(a: Node, ch, rows, cols) -> Node:
    """Slice a CHW node; gradient zero-pads back to the input shape."""
    if a.value.ndim != 3:
        raise ShapeError(f"crop expects a rank-3 node, got shape {a.shape}")
    sl = (slice(*ch), slice(*rows), slice(*cols))
    out = np.ascontiguousarray(a.value[sl])

    def bw(g):
        full = np.zeros_like(a.value)
        full[sl] = g
        return (full,)

    return Node(out, "crop", (a,), bw)


def channels(a: Node, lo: int, hi: int) -> Node:
    return crop(a, (lo, hi), (0, a.shape[1]), (0, a.shape[2]))


def sum_all(a: Node) -> Node:
    if a.value.size == 0:
        raise ArgumentError("reduce over empty tensor")
    return Node(a.value.sum(), "sum", (a,),
                lambda g: (np.full_like(a.value, float(g)),))


def mean_all(a: Node) -> Node:
    if a.value.size == 0:
        raise ArgumentError("reduce over empty tensor")
    n = a.value.size
    return Node(a.value.mean(), "mean", (a,),
                lambda g: (np.full_like(a.value, float(g) / n),))


def absval(a: Node) -> Node:
    # subgradient 0 at exactly zero
    return Node(np.abs(a.value), "abs", (a,), lambda g: (g * np.sign(a.value),))


def leaky_relu(a: Node, slope: float = 0.2) -> Node:
    mask = a.value > 0
    out = np.where(mask, a.value, slope * a.value)
    return Node(out, "leaky_relu", (a,),
                lambda g: (np.where(mask, g, slope * g),))


def relu(a: Node) -> Node:
    mask = a.value > 0
    return Node(np.where(mask, a.value, 0.0), "relu", (a,),
                lambda g: (np.where(mask, g, 0.0),))


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return Node(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Node) -> Node:
    y = 1.0 / (1.0 + np.exp(-a.value))
    return Node(y, "sigmoid", (a,), lambda g: (g * y * (1.0 - y),))


def upsample_nearest2(a: Node) -> Node:
    if a.value.ndim != 3:
        raise ShapeError(f"upsample expects CHW, got {a.shape}")
    out = a.value.repeat(2, axis=1).repeat(2, axis=2)

    def bw(g):
        c, h2, w2 = g.shape
        return (g.reshape(c, h2 // 2, 2, w2 // 2, 2).sum(axis=(2, 4)),)

    return Node(np.ascontiguousarray(out), "upsample_nearest2", (a,), bw)


def _toposort(root: Node):
    order = []
    seen = set()
    stack = [(root, iter(root.parents))]
    seen.add(id(root))
    while stack:
        node, it = stack[-1]
        advanced = False
        for p in it:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order  # parents before children


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into every reachable node's grad.

    Gradients of this pass are computed in a scratch table and added to
    ``grad`` at the end, so two backward calls without zeroing yield
    exactly twice the single-pass gradient.
    """
    if loss.value.ndim != 0:
        raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _toposort(loss)
    table = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = table.get(id(node))
        if g is None or node._backward is None:
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node.parents, pgrads):
            if pg is None:
                continue
            acc = table.get(id(p))
            if acc is None:
                table[id(p)] = np.asarray(pg, dtype=np.float64).copy()
            else:
                acc += pg
    for node in order:
        g = table.get(id(node))
        if g is not None:
            node.grad = node.grad + g


def grad_check(f, params: dict, step: float = 1e-5, atol: float = 1e-9) -> float:
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` maps a dict of name -> Node (trainable leaves) to a scalar
    Node. Returns the maximum relative error over every element of every
    parameter: |ga - gn| / (|ga| + |gn| + 1e-8). Differences below
    ``atol`` count as exact: they are round-off in the central
    difference, which otherwise dominates the ratio when the true
    gradient is zero (e.g. softmax shift directions).
    """
    nodes = {k: parameter(v.copy(), k) for k, v in params.items()}
    loss = f(nodes)
    backward(loss)
    analytic = {k: n.grad.copy() for k, n in nodes.items()}

    def eval_at(vals):
        out = f({k: Node(v) for k, v in vals.items()})
        return float(out.value)

    max_err = 0.0
    for k, v in params.items():
        base = {kk: vv.copy() for kk, vv in params.items()}
        flat = base[k].reshape(-1)
        ga = analytic[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = eval_at(base)
            flat[i] = orig - step
            fm = eval_at(base)
            flat[i] = orig
            gn = (fp - fm) / (2.0 * step)
            if abs(ga[i] - gn) > atol:
                err = abs(ga[i] - gn) / (abs(ga[i]) + abs(gn) + 1e-8)
                max_err = max(max_err, err)
    return max_err


def grad_check_sampled(f, params: dict, step: float = 1e-6,
                       per_param: int = 3, seed: int = 0,
                       atol: float = 1e-9) -> float:
    """grad_check restricted to a random subset of elements per parameter.

    Used for whole-model checks where a full central-difference sweep
    would be quadratic in parameter count; the sampled elements are
    still compared against an independent finite-difference oracle.
    """
    rng = np.random.default_rng(seed)
    nodes = {k: parameter(v.copy(), k) for k, v in params.items()}
    loss = f(nodes)
    backward(loss)
    analytic = {k: n.grad.copy() for k, n in nodes.items()}

    def eval_at(vals):
        out = f({k: Node(v) for k, v in vals.items()})
        return float(out.value)

    max_err = 0.0
    base = {kk: vv.copy() for kk, vv in params.items()}
    for k, v in params.items():
        flat = base[k].reshape(-1)
        ga = analytic[k].reshape(-1)
        idx = rng.choice(flat.size, size=min(per_param, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = eval_at(base)
            flat[i] = orig - step
            fm = eval_at(base)
            flat[i] = orig
            gn = (fp - fm) / (2.0 * step)
            if abs(ga[i] - gn) > atol:
                err = abs(ga[i] - gn) / (abs(ga[i]) + abs(gn) + 1e-8)
                max_err = max(max_err, err)
    return max_err
