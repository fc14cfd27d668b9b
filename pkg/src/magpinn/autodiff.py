"""Minimal differentiation engine for the network and its energy loss.

Two layers that compose:

* :class:`Var` -- reverse-mode node over numpy arrays. Every operation records
  its parents and a backward rule; :meth:`Var.backward` sweeps the recorded
  graph. Recordings are plain object graphs, so separate threads never share
  state.
* :class:`Dual2` -- forward-mode value with two tangent components
  (d/dx, d/dy). Its components may be floats, arrays or :class:`Var` nodes.
  With ``Var`` components the tangent-carrying forward pass is itself recorded,
  and a reverse sweep gives exact theta-gradients of quantities built from the
  spatial gradient (forward-over-reverse).

Only the primitives the network and loss need are supported; anything else
raises :class:`UnsupportedPrimitive`.
"""
from __future__ import annotations

import numpy as np


class UnsupportedPrimitive(TypeError):
    pass


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Var:
    """Reverse-mode node."""

    __slots__ = ("value", "grad", "parents", "backward_fn")
    __array_priority__ = 1000

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
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
            for p in node.parents:
                if isinstance(p, Var) and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(order):
            if node.backward_fn is None or node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for p, g in zip(node.parents, grads):
                if isinstance(p, Var) and g is not None:
                    g = _unbroadcast(g, p.value.shape)
                    p.grad = g if p.grad is None else p.grad + g

    # operators

    def __add__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return add(self, o)

    def __radd__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return add(o, self)

    def __sub__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return sub(self, o)

    def __rsub__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return sub(o, self)

    def __mul__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return mul(self, o)

    def __rmul__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return mul(o, self)

    def __truediv__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return div(self, o)

    def __rtruediv__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return matmul(self, o)

    def __rmatmul__(self, o):
        if isinstance(o, Dual2):
            return NotImplemented
        return matmul(o, self)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return vsum(self, axis)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        return _dispatch_ufunc(ufunc, method, inputs, kwargs)


def _val(x):
    return x.value if isinstance(x, Var) else x


def _is_var(x):
    return isinstance(x, Var)


def add(a, b):
    if not (_is_var(a) or _is_var(b)):
        return np.add(a, b)
    return Var(_val(a) + _val(b), (a, b), lambda g: (g, g))


def sub(a, b):
    if not (_is_var(a) or _is_var(b)):
        return np.subtract(a, b)
    return Var(_val(a) - _val(b), (a, b), lambda g: (g, -g))


def mul(a, b):
    if not (_is_var(a) or _is_var(b)):
        return np.multiply(a, b)
    av, bv = _val(a), _val(b)
    return Var(av * bv, (a, b), lambda g: (g * bv if _is_var(a) else None, g * av if _is_var(b) else None))


def div(a, b):
    if not (_is_var(a) or _is_var(b)):
        return np.true_divide(a, b)
    av, bv = _val(a), _val(b)
    out = av / bv
    return Var(out, (a, b), lambda g: (g / bv if _is_var(a) else None, -g * out / bv if _is_var(b) else None))


def neg(a):
    if not _is_var(a):
        return np.negative(a)
    return Var(-a.value, (a,), lambda g: (-g,))


def matmul(a, b):
    if not (_is_var(a) or _is_var(b)):
        return np.matmul(a, b)
    av, bv = _val(a), _val(b)

    def back(g):
        ga = g @ np.swapaxes(bv, -1, -2) if _is_var(a) else None
        gb = np.swapaxes(av, -1, -2) @ g if _is_var(b) else None
        return ga, gb

    return Var(av @ bv, (a, b), back)


def transpose(a):
    if not _is_var(a):
        return np.transpose(a)
    return Var(a.value.T, (a,), lambda g: (g.T,))


def vsum(a, axis=None):
    if not _is_var(a):
        return np.sum(a, axis=axis)
    shape = a.value.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Var(a.value.sum(axis=axis), (a,), back)


def exp(a):
    if isinstance(a, Dual2):
        e = exp(a.val)
        return Dual2(e, e * a.dx, e * a.dy)
    if not _is_var(a):
        return np.exp(a)
    out = np.exp(a.value)
    return Var(out, (a,), lambda g: (g * out,))


def cos(a):
    if isinstance(a, Dual2):
        d = neg(sin(a.val))
        return Dual2(cos(a.val), d * a.dx, d * a.dy)
    if not _is_var(a):
        return np.cos(a)
    v = a.value
    return Var(np.cos(v), (a,), lambda g: (-g * np.sin(v),))


def sin(a):
    if isinstance(a, Dual2):
        d = cos(a.val)
        return Dual2(sin(a.val), d * a.dx, d * a.dy)
    if not _is_var(a):
        return np.sin(a)
    v = a.value
    return Var(np.sin(v), (a,), lambda g: (g * np.cos(v),))


def _np_sigmoid(z):
    # exp of a non-positive argument only, no overflow
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a):
    if isinstance(a, Dual2):
        s = sigmoid(a.val)
        d = s * (1.0 - s)
        return Dual2(s, d * a.dx, d * a.dy)
    if not _is_var(a):
        return _np_sigmoid(np.asarray(a, dtype=float))
    s = _np_sigmoid(a.value)
    return Var(s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a):
    """z * sigmoid(z)."""
    if isinstance(a, Dual2):
        s = sigmoid(a.val)
        d = s * (1.0 + a.val * (1.0 - s))
        return Dual2(a.val * s, d * a.dx, d * a.dy)
    if not _is_var(a):
        z = np.asarray(a, dtype=float)
        return z * _np_sigmoid(z)
    return mul(a, sigmoid(a))


def elementwise(a, value, derivative):
    """Record y = f(a) given precomputed f(a) and f'(a) arrays.

    Used for the energy density, whose derivative in s is known in closed form.
    """
    if not _is_var(a):
        return np.asarray(value)
    d = np.asarray(derivative)
    return Var(value, (a,), lambda g: (g * d,))


def linear(h, W, b=None):
    """h @ W.T + b for a batch ``h`` of shape (n, d_in) and W of shape (d_out, d_in)."""
    if isinstance(h, Dual2):
        Wt = transpose(W)
        val = matmul(h.val, Wt)
        if b is not None:
            val = add(val, b)
        return Dual2(val, matmul(h.dx, Wt), matmul(h.dy, Wt))
    out = matmul(h, transpose(W))
    return add(out, b) if b is not None else out


_UFUNCS = {
    np.add: add,
    np.subtract: sub,
    np.multiply: mul,
    np.true_divide: div,
    np.negative: neg,
    np.matmul: matmul,
    np.exp: exp,
    np.cos: cos,
    np.sin: sin,
}


def _dispatch_ufunc(ufunc, method, inputs, kwargs):
    if method != "__call__" or kwargs or ufunc not in _UFUNCS:
        raise UnsupportedPrimitive(f"{ufunc.__name__} is not a supported primitive")
    return _UFUNCS[ufunc](*inputs)


class Dual2:
    """Value with exact partial derivatives along x and y."""

    __slots__ = ("val", "dx", "dy")
    __array_priority__ = 1001

    def __init__(self, val, dx=0.0, dy=0.0):
        self.val = val
        self.dx = dx
        self.dy = dy

    def __repr__(self):
        return f"Dual2({self.val!r}, {self.dx!r}, {self.dy!r})"

    @staticmethod
    def lift(x):
        return x if isinstance(x, Dual2) else Dual2(x, 0.0, 0.0)

    def __add__(self, o):
        o = Dual2.lift(o)
        return Dual2(add(self.val, o.val), add(self.dx, o.dx), add(self.dy, o.dy))

    __radd__ = __add__

    def __sub__(self, o):
        o = Dual2.lift(o)
        return Dual2(sub(self.val, o.val), sub(self.dx, o.dx), sub(self.dy, o.dy))

    def __rsub__(self, o):
        return Dual2.lift(o) - self

    def __mul__(self, o):
        if not isinstance(o, Dual2):
            return Dual2(mul(self.val, o), mul(self.dx, o), mul(self.dy, o))
        return Dual2(
            mul(self.val, o.val),
            add(mul(self.dx, o.val), mul(self.val, o.dx)),
            add(mul(self.dy, o.val), mul(self.val, o.dy)),
        )

    __rmul__ = __mul__

    def __truediv__(self, o):
        if not isinstance(o, Dual2):
            return Dual2(div(self.val, o), div(self.dx, o), div(self.dy, o))
        q = div(self.val, o.val)
        return Dual2(
            q,
            div(sub(self.dx, mul(q, o.dx)), o.val),
            div(sub(self.dy, mul(q, o.dy)), o.val),
        )

    def __rtruediv__(self, o):
        return Dual2.lift(o) / self

    def __neg__(self):
        return Dual2(neg(self.val), neg(self.dx), neg(self.dy))

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            raise UnsupportedPrimitive(f"{ufunc.__name__}.{method} is not supported")
        if ufunc is np.exp:
            return exp(inputs[0])
        if ufunc is np.cos:
            return cos(inputs[0])
        if ufunc is np.sin:
            return sin(inputs[0])
        if ufunc is np.negative:
            return -inputs[0]
        if ufunc in (np.add, np.subtract, np.multiply, np.true_divide):
            a, b = inputs
            a, b = Dual2.lift(a), b
            return {np.add: a.__add__, np.subtract: a.__sub__,
                    np.multiply: a.__mul__, np.true_divide: a.__truediv__}[ufunc](b)
        raise UnsupportedPrimitive(f"{ufunc.__name__} is not a supported primitive")


def spatial_gradient(f, point):
    """Value and exact (d/dx, d/dy) of ``f(x, y)`` at ``point``."""
    x = Dual2(float(point[0]), 1.0, 0.0)
    y = Dual2(float(point[1]), 0.0, 1.0)
    r = Dual2.lift(f(x, y))
    return float(np.asarray(r.val)), float(np.asarray(r.dx)), float(np.asarray(r.dy))


def theta_gradient(sample_loss, theta):
    """Gradient of a scalar loss with respect to every array in ``theta``.

    ``sample_loss`` receives a list of :class:`Var` leaves (one per array in
    ``theta``, same order) and must return a scalar built from supported
    primitives. Returns ``(loss_value, [grad arrays])``.
    """
    leaves = [Var(np.array(t, dtype=float, copy=True)) for t in theta]
    out = sample_loss(leaves)
    if not isinstance(out, Var):
        return float(np.asarray(out)), [np.zeros_like(np.asarray(t, dtype=float)) for t in theta]
    if out.value.size != 1:
        raise ValueError("loss must be a scalar")
    out.backward()
    grads = [lf.grad if lf.grad is not None else np.zeros_like(lf.value) for lf in leaves]
    return float(out.value.reshape(())), grads
