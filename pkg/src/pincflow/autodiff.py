"""Minimal reverse-mode automatic differentiation over numpy arrays.

The engine records a computation graph of :class:`Var` nodes as operations
execute and replays it backwards to accumulate exact gradients.  Every
function in this module accepts either a ``Var`` or a plain
numpy array / scalar; plain values are treated as constants with no
gradient path, so formula code can be written once and evaluated both in
"recording" mode (for training gradients) and in plain numpy (for cheap
inference and validation passes).

Only first-order reverse mode is provided.  Derivative-of-derivative
quantities needed by residual losses are obtained by writing the tangent
(input-derivative) propagation as explicit graph operations, after which a
single reverse sweep differentiates through them.
"""

from __future__ import annotations

import itertools

import numpy as np

_counter = itertools.count()


class Var:
    """A node in the computation graph: a value plus backward bookkeeping."""

    __slots__ = ("value", "parents", "vjp", "_id")

    # keep numpy from absorbing Var into object arrays; binary ops then
    # fall through to our reflected operators
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.vjp = vjp
        self._id = next(_counter)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.value!r})"

    # arithmetic -----------------------------------------------------------

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)


def value_of(x):
    """Underlying numpy value of a Var or plain array/scalar."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def is_var(*xs):
    return any(isinstance(x, Var) for x in xs)


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(root: Var) -> dict[Var, np.ndarray]:
    """Reverse sweep from a scalar ``root``; returns gradients per leaf Var."""
    if root.value.ndim != 0:
        raise ValueError("backward expects a scalar root")
    # creation order is a topological order; walk reachable nodes in reverse.
    # parents may contain plain constants, which are skipped.
    seen = {id(root)}
    stack = [root]
    nodes = [root]
    while stack:
        node = stack.pop()
        for parent in node.parents:
            if isinstance(parent, Var) and id(parent) not in seen:
                seen.add(id(parent))
                stack.append(parent)
                nodes.append(parent)
    nodes.sort(key=lambda v: v._id, reverse=True)

    grads: dict[int, np.ndarray] = {id(root): np.asarray(1.0)}
    leaf_grads: dict[Var, np.ndarray] = {}
    for node in nodes:
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.vjp is None:
            leaf_grads[node] = grad
            continue
        for parent, pgrad in zip(node.parents, node.vjp(grad)):
            if pgrad is None or not isinstance(parent, Var):
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pgrad if acc is None else acc + pgrad
    return leaf_grads


# binary elementwise ---------------------------------------------------------


def add(a, b):
    if not is_var(a, b):
        return value_of(a) + value_of(b)
    av, bv = value_of(a), value_of(b)

    def vjp(g):
        return (
            _unbroadcast(g, av.shape) if isinstance(a, Var) else None,
            _unbroadcast(g, bv.shape) if isinstance(b, Var) else None,
        )

    return Var(av + bv, (a, b), vjp)


def sub(a, b):
    if not is_var(a, b):
        return value_of(a) - value_of(b)
    av, bv = value_of(a), value_of(b)

    def vjp(g):
        return (
            _unbroadcast(g, av.shape) if isinstance(a, Var) else None,
            _unbroadcast(-g, bv.shape) if isinstance(b, Var) else None,
        )

    return Var(av - bv, (a, b), vjp)


def mul(a, b):
    if not is_var(a, b):
        return value_of(a) * value_of(b)
    av, bv = value_of(a), value_of(b)

    def vjp(g):
        return (
            _unbroadcast(g * bv, av.shape) if isinstance(a, Var) else None,
            _unbroadcast(g * av, bv.shape) if isinstance(b, Var) else None,
        )

    return Var(av * bv, (a, b), vjp)


def div(a, b):
    if not is_var(a, b):
        return value_of(a) / value_of(b)
    av, bv = value_of(a), value_of(b)
    out = av / bv

    def vjp(g):
        return (
            _unbroadcast(g / bv, av.shape) if isinstance(a, Var) else None,
            _unbroadcast(-g * out / bv, bv.shape) if isinstance(b, Var) else None,
        )

    return Var(out, (a, b), vjp)


# unary elementwise -----------------------------------------------------------


def _unary(x, fn, dfn):
    """dfn(out_value, in_value) -> local derivative (numpy)."""
    if not isinstance(x, Var):
        return fn(np.asarray(x, dtype=float))
    out = fn(x.value)
    return Var(out, (x,), lambda g, o=out, xv=x.value: (g * dfn(o, xv),))


def tanh(x):
    return _unary(x, np.tanh, lambda o, xv: 1.0 - o * o)


def sin(x):
    return _unary(x, np.sin, lambda o, xv: np.cos(xv))


def cos(x):
    return _unary(x, np.cos, lambda o, xv: -np.sin(xv))


def exp(x):
    return _unary(x, np.exp, lambda o, xv: o)


def log(x):
    return _unary(x, np.log, lambda o, xv: 1.0 / xv)


def log10(x):
    return _unary(x, np.log10, lambda o, xv: 1.0 / (xv * np.log(10.0)))


def sigmoid(x):
    def fn(v):
        return 1.0 / (1.0 + np.exp(-v))

    return _unary(x, fn, lambda o, xv: o * (1.0 - o))


def absolute(x):
    """|x| with subgradient sign(x); zero at the kink."""
    return _unary(x, np.abs, lambda o, xv: np.sign(xv))


def power(x, exponent):
    """x ** c for a constant exponent c."""
    c = float(exponent)
    return _unary(x, lambda v: v**c, lambda o, xv: c * xv ** (c - 1.0))


def clamp(x, lo, hi):
    """Clip to [lo, hi]; gradient is zero outside the open interval."""
    if not isinstance(x, Var):
        return np.clip(np.asarray(x, dtype=float), lo, hi)
    out = np.clip(x.value, lo, hi)
    inside = ((x.value > lo) & (x.value < hi)).astype(float)
    return Var(out, (x,), lambda g: (g * inside,))


# reductions ------------------------------------------------------------------


def total(x):
    if not isinstance(x, Var):
        return np.sum(np.asarray(x, dtype=float))
    return Var(np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, x.value.shape).copy(),))


def mean(x):
    if not isinstance(x, Var):
        return np.mean(np.asarray(x, dtype=float))
    n = x.value.size
    return Var(
        np.mean(x.value),
        (x,),
        lambda g: (np.broadcast_to(g / n, x.value.shape).copy(),),
    )


# structural ------------------------------------------------------------------


def getitem(x, index):
    """Basic (non-fancy) indexing with gradient scatter."""
    if not isinstance(x, Var):
        return np.asarray(x, dtype=float)[index]
    out = x.value[index]

    def vjp(g):
        full = np.zeros_like(x.value)
        full[index] = g
        return (full,)

    return Var(out, (x,), vjp)


def unsqueeze(x, axis):
    if not isinstance(x, Var):
        return np.expand_dims(np.asarray(x, dtype=float), axis)
    return Var(
        np.expand_dims(x.value, axis),
        (x,),
        lambda g: (np.squeeze(np.asarray(g), axis=axis),),
    )


# dense-layer primitives ------------------------------------------------------


def linear(x, weight, bias):
    """x @ weight.T + bias for x of shape (n, d_in), weight (d_out, d_in)."""
    xv, wv, bv = value_of(x), value_of(weight), value_of(bias)
    out = xv @ wv.T + bv
    if not is_var(x, weight, bias):
        return out

    def vjp(g):
        g = np.asarray(g)
        return (
            g @ wv if isinstance(x, Var) else None,
            g.T @ xv if isinstance(weight, Var) else None,
            g.sum(axis=0) if isinstance(bias, Var) else None,
        )

    return Var(out, (x, weight, bias), vjp)


def _tdot(w, t):
    """einsum('oi,nik->nok') via one gemm; t has shape (n, d_in, k)."""
    n, d_in, k = t.shape
    flat = t.transpose(1, 0, 2).reshape(d_in, n * k)
    return (w @ flat).reshape(w.shape[0], n, k).transpose(1, 0, 2)


def tangent_linear(weight, tangent):
    """Propagate input tangents (n, d_in, k) through a linear layer."""
    wv, tv = value_of(weight), value_of(tangent)
    out = _tdot(wv, tv)
    if not is_var(weight, tangent):
        return out

    def vjp(g):
        g = np.asarray(g)
        grad_w = None
        if isinstance(weight, Var):
            n, d_out, k = g.shape
            g2 = g.transpose(1, 0, 2).reshape(d_out, n * k)
            t2 = tv.transpose(1, 0, 2).reshape(tv.shape[1], n * k)
            grad_w = g2 @ t2.T
        grad_t = _tdot(wv.T, g) if isinstance(tangent, Var) else None
        return (grad_w, grad_t)

    return Var(out, (weight, tangent), vjp)
