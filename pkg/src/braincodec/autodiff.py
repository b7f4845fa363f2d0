"""Minimal reverse-mode automatic differentiation over numpy arrays.

Everything is float64 and deterministic: the same graph built from the same
values always produces bit-identical gradients.  Only the operations the
codec networks need are provided; there is no general broadcasting engine
beyond numpy's own, and gradients of broadcast operands are reduced back to
the operand shape.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "vsum",
    "vmean",
    "reshape",
    "transpose",
    "silu",
    "softplus",
    "tanh",
    "sigmoid",
    "log2",
    "sqrt",
    "square",
    "lower_bound",
    "conv1d",
    "mean_over_axis",
    "concat",
]


class Var:
    """A node in the computation graph: a value plus gradient plumbing."""

    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, value, parents=(), backward=None, requires_grad=True):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def backward(self, seed=None):
        """Accumulate gradients of this (scalar or seeded) node into the graph."""
        if seed is None:
            if self.value.size != 1:
                raise ValueError("backward() without seed requires a scalar output")
            seed = np.ones_like(self.value)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.value.shape:
            raise ValueError(
                f"seed shape {seed.shape} does not match output shape {self.value.shape}"
            )
        order = _topo_order(self)
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = seed.copy()
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # Arithmetic sugar keeps network code readable.
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def constant(value) -> Var:
    return Var(value, requires_grad=False)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else constant(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value + b.value, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g, a.value.shape)
        b.grad += _unbroadcast(g, b.value.shape)

    out._backward = backward
    return out


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value - b.value, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g, a.value.shape)
        b.grad -= _unbroadcast(g, b.value.shape)

    out._backward = backward
    return out


def neg(a) -> Var:
    a = _wrap(a)
    out = Var(-a.value, parents=(a,))

    def backward(g):
        a.grad -= g

    out._backward = backward
    return out


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value * b.value, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g * b.value, a.value.shape)
        b.grad += _unbroadcast(g * a.value, b.value.shape)

    out._backward = backward
    return out


def div(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value / b.value, parents=(a, b))

    def backward(g):
        a.grad += _unbroadcast(g / b.value, a.value.shape)
        b.grad += _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape)

    out._backward = backward
    return out


def matmul(a, b) -> Var:
    """Matrix product with numpy batch semantics (leading dims broadcast)."""
    a, b = _wrap(a), _wrap(b)
    out = Var(a.value @ b.value, parents=(a, b))

    def backward(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        a.grad += _unbroadcast(ga, a.value.shape)
        b.grad += _unbroadcast(gb, b.value.shape)

    out._backward = backward
    return out


def vsum(a, axis=None, keepdims=False) -> Var:
    a = _wrap(a)
    out = Var(a.value.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.grad += np.broadcast_to(g, a.value.shape)

    out._backward = backward
    return out


def vmean(a, axis=None, keepdims=False) -> Var:
    a = _wrap(a)
    out = Var(a.value.mean(axis=axis, keepdims=keepdims), parents=(a,))
    n = a.value.size / out.value.size

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.grad += np.broadcast_to(g, a.value.shape) / n

    out._backward = backward
    return out


def mean_over_axis(a, axis: int) -> Var:
    return vmean(a, axis=axis)


def reshape(a, shape) -> Var:
    a = _wrap(a)
    out = Var(a.value.reshape(shape), parents=(a,))

    def backward(g):
        a.grad += g.reshape(a.value.shape)

    out._backward = backward
    return out


def transpose(a, axes) -> Var:
    a = _wrap(a)
    out = Var(a.value.transpose(axes), parents=(a,))
    inv = tuple(np.argsort(axes))

    def backward(g):
        a.grad += g.transpose(inv)

    out._backward = backward
    return out


def concat(parts, axis: int) -> Var:
    parts = [_wrap(p) for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=axis), parents=tuple(parts))
    sizes = [p.value.shape[axis] for p in parts]

    def backward(g):
        start = 0
        for p, size in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + size)
            p.grad += g[tuple(sl)]
            start += size

    out._backward = backward
    return out


def silu(a) -> Var:
    """x * sigmoid(x): smooth everywhere, so finite-difference checks stay tight."""
    a = _wrap(a)
    s = _sigmoid_np(a.value)
    out = Var(a.value * s, parents=(a,))

    def backward(g):
        a.grad += g * s * (1.0 + a.value * (1.0 - s))

    out._backward = backward
    return out


def softplus(a) -> Var:
    a = _wrap(a)
    x = a.value
    out_val = np.logaddexp(0.0, x)
    out = Var(out_val, parents=(a,))

    def backward(g):
        a.grad += g * _sigmoid_np(x)

    out._backward = backward
    return out


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Var:
    a = _wrap(a)
    s = _sigmoid_np(a.value)
    out = Var(s, parents=(a,))

    def backward(g):
        a.grad += g * s * (1.0 - s)

    out._backward = backward
    return out


def tanh(a) -> Var:
    a = _wrap(a)
    t = np.tanh(a.value)
    out = Var(t, parents=(a,))

    def backward(g):
        a.grad += g * (1.0 - t * t)

    out._backward = backward
    return out


def log2(a) -> Var:
    a = _wrap(a)
    out = Var(np.log2(a.value), parents=(a,))
    inv_ln2 = 1.0 / np.log(2.0)

    def backward(g):
        a.grad += g * inv_ln2 / a.value

    out._backward = backward
    return out


def sqrt(a) -> Var:
    a = _wrap(a)
    r = np.sqrt(a.value)
    out = Var(r, parents=(a,))

    def backward(g):
        a.grad += g * 0.5 / r

    out._backward = backward
    return out


def square(a) -> Var:
    a = _wrap(a)
    out = Var(a.value * a.value, parents=(a,))

    def backward(g):
        a.grad += g * 2.0 * a.value

    out._backward = backward
    return out


def lower_bound(a, bound: float) -> Var:
    """max(a, bound) with a one-sided gradient.

    The gradient passes when the input is above the bound, or when it points
    upward out of the clamp (so training can always escape the floor).
    """
    a = _wrap(a)
    out = Var(np.maximum(a.value, bound), parents=(a,))
    above = a.value >= bound

    def backward(g):
        pass_through = above | (g < 0)
        a.grad += np.where(pass_through, g, 0.0)

    out._backward = backward
    return out


def conv1d(x, w, b, stride: int = 1) -> Var:
    """1-D convolution over the last axis with 'same'-style zero padding.

    x: (B, C_in, L), w: (C_out, C_in, K), b: (C_out,).
    Output length is ceil(L / stride) for odd K with pad K//2.
    """
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    batch, c_in, length = x.value.shape
    c_out, c_in_w, k = w.value.shape
    if c_in != c_in_w:
        raise ValueError(f"conv1d channel mismatch: input {c_in}, weight {c_in_w}")
    pad = k // 2
    l_out = (length + 2 * pad - k) // stride + 1
    xp = np.zeros((batch, c_in, length + 2 * pad), dtype=np.float64)
    xp[:, :, pad : pad + length] = x.value

    out_val = np.broadcast_to(b.value[None, :, None], (batch, c_out, l_out)).copy()
    for tap in range(k):
        sl = xp[:, :, tap : tap + stride * l_out : stride]
        out_val += np.matmul(w.value[:, :, tap], sl)
    out = Var(out_val, parents=(x, w, b))

    def backward(g):
        gxp = np.zeros_like(xp)
        for tap in range(k):
            sl = xp[:, :, tap : tap + stride * l_out : stride]
            # (B,O,L)@(B,L,C) summed over batch -> (O,C)
            w.grad[:, :, tap] += np.matmul(g, sl.transpose(0, 2, 1)).sum(axis=0)
            gxp[:, :, tap : tap + stride * l_out : stride] += np.matmul(
                w.value[:, :, tap].T, g
            )
        b.grad += g.sum(axis=(0, 2))
        x.grad += gxp[:, :, pad : pad + length]

    out._backward = backward
    return out
