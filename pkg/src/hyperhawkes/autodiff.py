"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Every primitive accepts plain arrays or :class:`Var` nodes. When no operand
is a ``Var`` the primitive simply returns the numpy result, so model code
written against this module runs unchanged in a fast "values only" mode
(used for evaluation, simulation and finite differences).

Complex quantities are carried as pairs of real arrays by the callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Tape:
    """Append-only record of primitive applications."""

    def __init__(self):
        self.nodes: list[Var] = []

    def param(self, value, name: str | None = None) -> "Var":
        """Register a leaf (trainable input) on this tape."""
        v = Var(np.array(value, dtype=np.float64), self, (), None)
        v.name = name
        return v

    def __len__(self):
        return len(self.nodes)


class Var:
    __slots__ = ("value", "tape", "parents", "grad_fn", "index", "name")

    def __init__(self, value, tape: Tape, parents, grad_fn):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.grad_fn = grad_fn
        self.name = None
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name!r})"

    __array_priority__ = 100

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


def value(x):
    """Forward value of a node or array."""
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _record(out, inputs, grad_fn):
    tape = _tape_of(*inputs)
    if tape is None:
        return out
    return Var(out, tape, inputs, grad_fn)


def _binary(op, a, b):
    av, bv = value(a), value(b)
    try:
        return av, bv, op(av, bv)
    except ValueError as e:
        raise ShapeError(f"incompatible shapes {np.shape(av)} and {np.shape(bv)}") from e


# ---------------------------------------------------------------------------
# elementwise binary


def add(a, b):
    av, bv, out = _binary(np.add, a, b)
    return _record(out, (a, b), lambda g: (g, g))


def sub(a, b):
    av, bv, out = _binary(np.subtract, a, b)
    return _record(out, (a, b), lambda g: (g, -g))


def mul(a, b):
    av, bv, out = _binary(np.multiply, a, b)
    ga, gb = isinstance(a, Var), isinstance(b, Var)
    return _record(out, (a, b), lambda g: (g * bv if ga else None, g * av if gb else None))


def div(a, b):
    av, bv, out = _binary(np.divide, a, b)
    return _record(out, (a, b), lambda g: (g / bv, -g * out / bv))


# ---------------------------------------------------------------------------
# elementwise unary


def neg(a):
    return _record(-value(a), (a,), lambda g: (-g,))


def exp(a):
    out = np.exp(value(a))
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    av = value(a)
    if np.any(av <= 0):
        raise DomainError("log of non-positive value")
    return _record(np.log(av), (a,), lambda g: (g / av,))


def tanh(a):
    out = np.tanh(value(a))
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(z):
    # split by sign so neither branch overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_np(z):
    z = np.asarray(z, dtype=np.float64)
    return _sigmoid(np.atleast_1d(z)).reshape(z.shape)


def softplus_np(z):
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def inverse_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))


def sigmoid(a):
    out = sigmoid_np(value(a))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a):
    av = value(a)
    out = softplus_np(av)
    return _record(out, (a,), lambda g: (g * sigmoid_np(av),))


def cos(a):
    av = value(a)
    return _record(np.cos(av), (a,), lambda g: (-g * np.sin(av),))


def sin(a):
    av = value(a)
    return _record(np.sin(av), (a,), lambda g: (g * np.cos(av),))


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a, b):
    """Batched matrix product following numpy ``@`` semantics (ndim >= 2 or 1)."""
    av, bv = value(a), value(b)
    try:
        out = av @ bv
    except ValueError as e:
        raise ShapeError(f"matmul shapes {np.shape(av)} and {np.shape(bv)}") from e

    def grad(g):
        A = av if av.ndim > 1 else av[None, :]
        B = bv if bv.ndim > 1 else bv[:, None]
        G = g
        if av.ndim == 1:
            G = np.expand_dims(G, -2)
        if bv.ndim == 1:
            G = np.expand_dims(G, -1)
        ga = G @ np.swapaxes(B, -1, -2)
        gb = np.swapaxes(A, -1, -2) @ G
        if av.ndim == 1:
            ga = ga.reshape(ga.shape[:-2] + ga.shape[-1:])
        if bv.ndim == 1:
            gb = gb.reshape(gb.shape[:-1])
        return ga, gb

    return _record(out, (a, b), grad)


def matvec(W, x):
    """``W x`` applied along the last axis of ``x`` (``x`` may carry batch axes)."""
    Wv, xv = value(W), value(x)
    if Wv.ndim != 2 or np.shape(xv)[-1] != Wv.shape[1]:
        raise ShapeError(f"matvec shapes {np.shape(Wv)} and {np.shape(xv)}")
    out = xv @ Wv.T

    def grad(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = xv.reshape(-1, xv.shape[-1])
        return g2.T @ x2, g @ Wv

    return _record(out, (W, x), grad)


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    av = value(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape),)

    return _record(out, (a,), grad)


def mean(a, axis=None, keepdims=False):
    av = value(a)
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(xs, axis=-1):
    vals = [value(x) for x in xs]
    try:
        out = np.concatenate(vals, axis=axis)
    except ValueError as e:
        raise ShapeError(str(e)) from e
    splits = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def grad(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(xs), grad)


def getitem(a, idx):
    av = value(a)
    out = av[idx]
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(p is Ellipsis or p is None or isinstance(p, (slice, int, np.integer)) for p in parts)

    def grad(g):
        full = np.zeros_like(av)
        if basic:
            full[idx] = g  # basic indexing never repeats an element
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _record(out, (a,), grad)


def take(a, indices, axis=-1):
    """Gather along ``axis``; ``indices`` may be any integer array."""
    av = value(a)
    indices = np.asarray(indices)
    out = np.take(av, indices, axis=axis)
    ax = axis % av.ndim
    unique = np.unique(indices).size == indices.size

    def grad(g):
        full = np.zeros_like(av)
        if unique and indices.ndim == 1:
            idx = (slice(None),) * ax + (indices,)
            full[idx] = g
            return (full,)
        moved = np.moveaxis(full, ax, 0)
        gm = np.moveaxis(g, list(range(ax, ax + indices.ndim)), list(range(indices.ndim)))
        if unique:
            moved[indices] = gm
        else:
            np.add.at(moved, indices, gm)
        return (full,)

    return _record(out, (a,), grad)


def reshape(a, shape):
    av = value(a)
    return _record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def swap_last(a):
    """Swap the last two axes."""
    return _record(np.swapaxes(value(a), -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def broadcast(a, shape):
    """Scalar (or any compatible) broadcast to ``shape``."""
    av = value(a)
    out = np.broadcast_to(av, shape).copy()
    return _record(out, (a,), lambda g: (g,))


# ---------------------------------------------------------------------------
# backward pass


class GradientMap(dict):
    """Parameter name -> gradient array. Missing names mean zero gradient."""

    def get_or_zero(self, name, like):
        g = self.get(name)
        return np.zeros_like(like) if g is None else g


def backward(tape: Tape, root: Var) -> GradientMap:
    """Reverse sweep from a scalar ``root``. The tape is left intact."""
    if not isinstance(root, Var) or root.tape is not tape:
        raise ValueError("root is not recorded on this tape")
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.value.shape}")
    nodes = tape.nodes
    grads: list = [None] * (root.index + 1)
    grads[root.index] = np.ones_like(root.value)
    for i in range(root.index, -1, -1):
        g = grads[i]
        node = nodes[i]
        if g is None or node.grad_fn is None:
            continue
        pgs = node.grad_fn(g)
        for p, pg in zip(node.parents, pgs):
            if not isinstance(p, Var) or pg is None:
                continue
            pg = _unbroadcast(np.asarray(pg, dtype=np.float64), p.value.shape)
            j = p.index
            grads[j] = pg if grads[j] is None else grads[j] + pg
    out = GradientMap()
    for node in nodes[: root.index + 1]:
        if node.grad_fn is None and node.name is not None:
            g = grads[node.index]
            out[node.name] = np.zeros_like(node.value) if g is None else g
    return out


def value_and_grad(f: Callable, params: Mapping[str, np.ndarray]):
    """Evaluate scalar ``f(params)`` on a fresh tape; return (value, GradientMap)."""
    tape = Tape()
    leaves = {k: tape.param(v, k) for k, v in params.items()}
    out = f(leaves)
    if not isinstance(out, Var):
        # f did not touch any parameter
        return float(np.asarray(out)), GradientMap({k: np.zeros_like(v) for k, v in params.items()})
    return float(out.value.reshape(())), backward(tape, out)


@dataclass
class GradCheck:
    max_rel_error: float
    valid: bool
    worst: tuple | None = None


def check_gradient(f: Callable, params: Mapping[str, np.ndarray], eps: float = 1e-5,
                   names=None, max_coords: int | None = None, rng=None) -> GradCheck:
    """Compare reverse-mode gradients of scalar ``f`` with central differences.

    The per-coordinate error is ``|ad - fd| / max(1e-8, |ad| + |fd|)``.
    ``max_coords`` subsamples coordinates per parameter for large models.
    """
    if not (1e-8 < eps < 1e-2):
        return GradCheck(float("nan"), False)
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, grads = value_and_grad(f, params)
    worst, worst_at = 0.0, None
    for name in names or params:
        p = params[name]
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        ad = grads.get_or_zero(name, p).reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            fp = float(np.asarray(f(params)))
            flat[c] = orig - eps
            fm = float(np.asarray(f(params)))
            flat[c] = orig
            fd = (fp - fm) / (2 * eps)
            err = abs(ad[c] - fd) / max(1e-8, abs(ad[c]) + abs(fd))
            if err > worst:
                worst, worst_at = err, (name, int(c), float(ad[c]), fd)
    return GradCheck(worst, True, worst_at)
