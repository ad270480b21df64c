"""Reverse-mode automatic differentiation over numpy arrays.

A minimal tape: every operation returns a `Var` node holding the forward
value plus a closure that maps an output cotangent to parent cotangents.
Gradients are obtained by walking the graph from a scalar root in reverse
topological order (`backward`).

Inputs that do not require gradients are treated as constants: no closure
is allocated and no graph is retained, so the same numerical code runs at
plain-numpy cost when nothing upstream is trainable.

All arithmetic is float64.  Accumulation order during the reverse sweep is
fixed by graph construction order, which keeps results bit-reproducible.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var",
    "leaf",
    "constant",
    "value_of",
    "backward",
    "add", "sub", "mul", "div", "neg",
    "exp", "log", "tanh", "sin", "cos", "sqrt", "square", "pow_const",
    "sum_all", "sum_axis", "mean_all",
    "clip", "where_mask", "expand_dims", "reshape", "transpose_axes",
    "dot_last", "einsum2", "concat_last", "concat_axis0", "slice_axis0",
    "index_axis", "slice_vec", "take_vec", "gather_rows", "custom",
]


class Var:
    """A node in the computation graph.

    `value` is always a float64 ndarray (possibly 0-d).  `vjp` maps the
    cotangent of this node to a tuple of cotangents, one per parent (None
    for constant parents).
    """

    __slots__ = ("value", "parents", "vjp", "requires_grad")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_const(self, p)


def _asarray(x):
    return np.asarray(x, dtype=np.float64)


def leaf(value):
    """A differentiable input node."""
    return Var(_asarray(value), requires_grad=True)


def constant(value):
    return Var(_asarray(value))


def value_of(x):
    """Forward value of a Var, or the argument itself as an ndarray."""
    if isinstance(x, Var):
        return x.value
    return _asarray(x)


def _lift(x):
    return x if isinstance(x, Var) else Var(_asarray(x))


def _node(value, parents, make_vjp):
    req = any(p.requires_grad for p in parents)
    # Closures are only built on the traced path.
    return Var(value, parents, make_vjp() if req else None, req)


def backward(root, leaves, seed=None):
    """Reverse sweep from a root node.

    Returns one gradient array per entry of `leaves` (zeros for leaves the
    root does not depend on).  The graph is left untouched, so several
    sweeps over the same graph (with different roots or seeds) are fine.
    """
    if seed is None:
        seed = np.ones_like(root.value)
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        if node.vjp is not None:
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
    grads = {id(root): np.asarray(seed, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for p, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            if k in grads:
                grads[k] = grads[k] + pg
            else:
                grads[k] = pg
    out = []
    for lf in leaves:
        g = grads.get(id(lf))
        out.append(np.zeros_like(lf.value) if g is None else np.asarray(g))
    return out


def _unbroadcast(g, shape):
    """Sum a cotangent down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value

    def make():
        return lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape))

    return _node(av + bv, (a, b), make)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value

    def make():
        return lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape))

    return _node(av - bv, (a, b), make)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value

    def make():
        return lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))

    return _node(av * bv, (a, b), make)


def div(a, b):
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    out = av / bv

    def make():
        def vjp(g):
            gb = np.negative(np.divide(np.multiply(g, out), bv))
            return (_unbroadcast(np.divide(g, bv), av.shape),
                    _unbroadcast(gb, bv.shape))
        return vjp

    return _node(out, (a, b), make)


def neg(a):
    a = _lift(a)

    def make():
        return lambda g: (-g,)

    return _node(-a.value, (a,), make)


def pow_const(a, p):
    a = _lift(a)
    p = float(p)
    av = a.value

    def make():
        def vjp(g):
            gp = np.multiply(np.multiply(np.power(av, p - 1.0), g), p)
            return (gp,)
        return vjp

    return _node(av ** p, (a,), make)


def square(a):
    a = _lift(a)
    av = a.value

    def make():
        def vjp(g):
            return (np.multiply(np.multiply(g, av), 2.0),)
        return vjp

    return _node(av * av, (a,), make)


def exp(a):
    a = _lift(a)
    out = np.exp(a.value)

    def make():
        return lambda g: (g * out,)

    return _node(out, (a,), make)


def log(a):
    a = _lift(a)
    av = a.value

    def make():
        return lambda g: (g / av,)

    return _node(np.log(av), (a,), make)


def tanh(a):
    a = _lift(a)
    out = np.tanh(a.value)

    def make():
        def vjp(g):
            gt = np.multiply(np.subtract(1.0, np.multiply(out, out)), g)
            return (gt,)
        return vjp

    return _node(out, (a,), make)


def sin(a):
    a = _lift(a)
    av = a.value

    def make():
        return lambda g: (g * np.cos(av),)

    return _node(np.sin(av), (a,), make)


def cos(a):
    a = _lift(a)
    av = a.value

    def make():
        return lambda g: (-g * np.sin(av),)

    return _node(np.cos(av), (a,), make)


def sqrt(a):
    a = _lift(a)
    out = np.sqrt(a.value)

    def make():
        def vjp(g):
            return (np.multiply(np.divide(g, out), 0.5),)
        return vjp

    return _node(out, (a,), make)


def clip(a, lo, hi):
    """Clamp to [lo, hi] with zero gradient outside (subgradient convention)."""
    a = _lift(a)
    av = a.value
    out = np.clip(av, lo, hi)

    def make():
        inside = ((av >= lo) if lo is not None else True) & ((av <= hi) if hi is not None else True)
        return lambda g: (g * inside,)

    return _node(out, (a,), make)


def where_mask(mask, a, b):
    """Elementwise select by a constant boolean mask."""
    a, b = _lift(a), _lift(b)
    mask = np.asarray(mask, dtype=bool)
    av, bv = a.value, b.value
    out = np.where(mask, av, bv)

    def make():
        return lambda g: (
            _unbroadcast(np.where(mask, g, 0.0), av.shape),
            _unbroadcast(np.where(mask, 0.0, g), bv.shape),
        )

    return _node(out, (a, b), make)


# ---------------------------------------------------------------------------
# reductions and shape ops

def sum_all(a):
    a = _lift(a)
    av = a.value

    def make():
        return lambda g: (np.broadcast_to(g, av.shape),)

    return _node(np.asarray(av.sum()), (a,), make)


def sum_axis(a, axis, keepdims=False):
    a = _lift(a)
    av = a.value
    out = av.sum(axis=axis, keepdims=keepdims)

    def make():
        def vjp(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, av.shape),)
        return vjp

    return _node(out, (a,), make)


def mean_all(a):
    a = _lift(a)
    n = a.value.size
    return div(sum_all(a), float(n))


def expand_dims(a, axis):
    a = _lift(a)

    def make():
        return lambda g: (np.squeeze(g, axis=axis),)

    return _node(np.expand_dims(a.value, axis), (a,), make)


def reshape(a, shape):
    a = _lift(a)
    old = a.value.shape

    def make():
        return lambda g: (g.reshape(old),)

    return _node(a.value.reshape(shape), (a,), make)


def transpose_axes(a, perm):
    a = _lift(a)
    inv = np.argsort(perm)

    def make():
        return lambda g: (np.transpose(g, inv),)

    return _node(np.transpose(a.value, perm), (a,), make)


def custom(value, parents, vjp_fn):
    """Build a node with a hand-written vector-Jacobian product.

    `vjp_fn(g)` must return one cotangent per parent (None for constants).
    """
    parents = tuple(_lift(p) for p in parents)
    return _node(np.asarray(value, dtype=np.float64), parents, lambda: vjp_fn)


def concat_axis0(parts):
    parts = [_lift(p) for p in parts]
    vals = [p.value for p in parts]
    counts = [v.shape[0] for v in vals]
    offs = np.concatenate([[0], np.cumsum(counts)])

    def make():
        def vjp(g):
            return tuple(g[offs[i]:offs[i + 1]] for i in range(len(vals)))
        return vjp

    return _node(np.concatenate(vals, axis=0), tuple(parts), make)


def slice_axis0(a, start, stop):
    a = _lift(a)
    av = a.value

    def make():
        def vjp(g):
            full = np.zeros_like(av)
            full[start:stop] = g
            return (full,)
        return vjp

    return _node(av[start:stop], (a,), make)


def concat_last(parts):
    parts = [_lift(p) for p in parts]
    vals = [p.value for p in parts]
    widths = [v.shape[-1] for v in vals]
    offs = np.concatenate([[0], np.cumsum(widths)])

    def make():
        def vjp(g):
            return tuple(g[..., offs[i]:offs[i + 1]] for i in range(len(vals)))
        return vjp

    return _node(np.concatenate(vals, axis=-1), tuple(parts), make)


def index_axis(a, axis, i):
    """Integer indexing along one axis (removes the axis)."""
    a = _lift(a)
    av = a.value
    out = np.take(av, i, axis=axis)

    def make():
        def vjp(g):
            full = np.zeros_like(av)
            sl = [slice(None)] * av.ndim
            sl[axis] = i
            full[tuple(sl)] = g
            return (full,)
        return vjp

    return _node(out, (a,), make)


def slice_vec(a, start, stop):
    """Contiguous slice of a 1-d vector (cheap scatter-free backward)."""
    a = _lift(a)
    av = a.value

    def make():
        def vjp(g):
            full = np.zeros_like(av)
            full[start:stop] = g
            return (full,)
        return vjp

    return _node(av[start:stop], (a,), make)


def take_vec(a, idx):
    """Gather from a 1-d vector with a constant integer index array."""
    a = _lift(a)
    av = a.value
    idx = np.asarray(idx)

    def make():
        def vjp(g):
            full = np.zeros_like(av)
            np.add.at(full, idx, g)
            return (full,)
        return vjp

    return _node(av[idx], (a,), make)


def gather_rows(a, cols):
    """From a (n, m) array pick entry cols[i] of row i -> (n,)."""
    a = _lift(a)
    av = a.value
    rows = np.arange(av.shape[0])
    cols = np.asarray(cols)

    def make():
        def vjp(g):
            full = np.zeros_like(av)
            np.add.at(full, (rows, cols), g)
            return (full,)
        return vjp

    return _node(av[rows, cols], (a,), make)


# ---------------------------------------------------------------------------
# contractions

def dot_last(a, w):
    """Contract the last axis of `a` with the second axis of `w`.

    a: (..., i), w: (o, i) -> (..., o).  This is the affine-layer kernel; it
    reshapes to a single GEMM.
    """
    a, w = _lift(a), _lift(w)
    av, wv = a.value, w.value
    lead = av.shape[:-1]
    a2 = av.reshape(-1, av.shape[-1])
    out = (a2 @ wv.T).reshape(lead + (wv.shape[0],))

    def make():
        def vjp(g):
            g2 = g.reshape(-1, wv.shape[0])
            ga = (g2 @ wv).reshape(av.shape)
            gw = g2.T @ a2
            return (ga, gw)
        return vjp

    return _node(out, (a, w), make)


def _einsum_backward_spec(spec):
    lhs, out = spec.split("->")
    sa, sb = lhs.split(",")
    for operand, other in ((sa, sb), (sb, sa)):
        if len(set(operand)) != len(operand):
            raise ValueError(f"repeated subscript within one operand: {spec}")
        if not set(operand) <= set(out) | set(other):
            raise ValueError(f"operand subscript summed internally: {spec}")
    return sa, sb, out


def einsum2(spec, a, b):
    """Two-operand einsum.

    Restricted to specs where every subscript of an operand appears in the
    output or in the other operand, so the backward pass is again an einsum
    with the roles swapped.
    """
    sa, sb, out = _einsum_backward_spec(spec)
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    val = np.einsum(spec, av, bv)

    def make():
        def vjp(g):
            ga = np.einsum(f"{out},{sb}->{sa}", g, bv)
            gb = np.einsum(f"{out},{sa}->{sb}", g, av)
            return (ga, gb)
        return vjp

    return _node(val, (a, b), make)
