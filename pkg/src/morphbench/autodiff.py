"""Reverse-mode differentiation over a fixed op set, on dense numpy arrays.

Ops evaluate eagerly and record themselves on a Graph (a tape). The tape's
construction order is the topological order; backward walks it in reverse.
Every op checks shapes before computing and finiteness after, raising errors
that name the offending node. Gradients only flow into branches that need
them: constants (weights during inversion, reference images) cost nothing
on the backward pass.
"""

from __future__ import annotations

import numpy as np

from .tensor import default_dtype


class GraphError(ValueError):
    """Base class for graph construction/evaluation failures."""


class ShapeError(GraphError):
    """Operand shapes incompatible with the op; message names the node."""


class NonFiniteError(GraphError):
    """An op produced NaN/Inf; message names the node."""


class Node:
    """One value in the graph: a leaf (variable/constant) or an op output."""

    __slots__ = ("graph", "value", "name", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, graph, value, name, requires_grad, parents=(), backward=None):
        self.graph = graph
        self.value = value
        self.name = name
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.name}, shape={self.value.shape})"


class Graph:
    """Records op applications in construction order; immutable once built."""

    def __init__(self, dtype=None):
        self.dtype = np.dtype(dtype or default_dtype()).type
        self.nodes = []

    def variable(self, name, value):
        """Leaf that receives a gradient."""
        return self._leaf(name, value, requires_grad=True)

    def constant(self, name, value):
        """Leaf excluded from the backward pass."""
        return self._leaf(name, value, requires_grad=False)

    def _leaf(self, name, value, requires_grad):
        value = np.asarray(value, dtype=self.dtype)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"leaf '{name}': non-finite input values")
        node = Node(self, value, name, requires_grad)
        self.nodes.append(node)
        return node

    def _op(self, opname, value, parents, backward):
        name = f"{opname}#{len(self.nodes)}"
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"node {name}: produced non-finite values")
        requires_grad = any(p.requires_grad for p in parents)
        node = Node(self, value, name, requires_grad,
                    parents=parents, backward=backward if requires_grad else None)
        self.nodes.append(node)
        return node

    def backward(self, loss):
        """Accumulate d loss / d node into .grad for every node on the path."""
        if loss.graph is not self:
            raise GraphError("loss node belongs to a different graph")
        if loss.value.shape != ():
            raise ShapeError(f"node {loss.name}: backward needs a scalar, got shape {loss.value.shape}")
        loss.grad = np.ones((), dtype=self.dtype)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def _accum(node, g):
    if node.requires_grad:
        node.grad = g if node.grad is None else node.grad + g


def _same_graph(opname, *nodes):
    g = nodes[0].graph
    for n in nodes[1:]:
        if n.graph is not g:
            raise GraphError(f"{opname}: operands belong to different graphs")
    return g


def _want_same_shape(opname, a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{opname}: shape mismatch {a.value.shape} vs {b.value.shape}")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    g = _same_graph("add", a, b)
    _want_same_shape("add", a, b)

    def backward(grad):
        _accum(a, grad)
        _accum(b, grad)

    return g._op("add", a.value + b.value, (a, b), backward)


def sub(a, b):
    g = _same_graph("sub", a, b)
    _want_same_shape("sub", a, b)

    def backward(grad):
        _accum(a, grad)
        _accum(b, -grad)

    return g._op("sub", a.value - b.value, (a, b), backward)


def mul(a, b):
    g = _same_graph("mul", a, b)
    _want_same_shape("mul", a, b)

    def backward(grad):
        _accum(a, grad * b.value)
        _accum(b, grad * a.value)

    return g._op("mul", a.value * b.value, (a, b), backward)


def div(a, b):
    g = _same_graph("div", a, b)
    _want_same_shape("div", a, b)

    def backward(grad):
        _accum(a, grad / b.value)
        _accum(b, -grad * a.value / (b.value * b.value))

    return g._op("div", a.value / b.value, (a, b), backward)


def square(x):
    def backward(grad):
        _accum(x, grad * (2.0 * x.value))

    return x.graph._op("square", x.value * x.value, (x,), backward)


def affine(x, scale, shift=0.0):
    """scale * x + shift with python-float coefficients."""
    scale = float(scale)

    def backward(grad):
        _accum(x, grad * scale)

    return x.graph._op("affine", scale * x.value + shift, (x,), backward)


def leaky_relu(x, alpha=0.2):
    mask = x.value >= 0

    def backward(grad):
        _accum(x, grad * np.where(mask, 1.0, alpha))

    return x.graph._op("leaky_relu", np.where(mask, x.value, alpha * x.value), (x,), backward)


def sigmoid(x):
    y = 1.0 / (1.0 + np.exp(-x.value))

    def backward(grad):
        _accum(x, grad * (y * (1.0 - y)))

    return x.graph._op("sigmoid", y, (x,), backward)


def pow_const(x, p):
    """x ** p for x >= 0. Subgradient at x == 0 fixed to 0 (deterministic ties)."""
    p = float(p)
    if np.any(x.value < 0):
        raise GraphError(f"pow_const: negative base in {x.name}")
    y = x.value ** p

    def backward(grad):
        # 0 ** (p-1) would warn for p < 1; substitute a safe base where the
        # subgradient is pinned to 0 anyway
        pos = x.value > 0
        base = np.where(pos, x.value, 1.0)
        _accum(x, grad * np.where(pos, p * base ** (p - 1.0), 0.0))

    return x.graph._op("pow_const", y, (x,), backward)


def clamp_min(x, floor):
    """max(x, floor); gradient passes through where x >= floor."""
    floor = float(floor)
    mask = x.value >= floor

    def backward(grad):
        _accum(x, grad * mask)

    return x.graph._op("clamp_min", np.where(mask, x.value, floor), (x,), backward)


# ---------------------------------------------------------------------------
# shape ops


def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(x.value.shape)) != int(np.prod(shape)):
        raise ShapeError(f"reshape: cannot reshape {x.value.shape} to {shape}")
    orig = x.value.shape

    def backward(grad):
        _accum(x, grad.reshape(orig))

    return x.graph._op("reshape", x.value.reshape(shape), (x,), backward)


def take_row(x, i):
    """Row i of a 2-D tensor."""
    if x.value.ndim != 2:
        raise ShapeError(f"take_row: expected 2-D, got {x.value.shape}")
    i = int(i)

    def backward(grad):
        full = np.zeros_like(x.value)
        full[i] = grad
        _accum(x, full)

    return x.graph._op("take_row", x.value[i].copy(), (x,), backward)


def broadcast_rows(v, rows):
    """Tile a 1-D vector into a (rows, d) matrix; backward sums over rows."""
    if v.value.ndim != 1:
        raise ShapeError(f"broadcast_rows: expected 1-D, got {v.value.shape}")
    rows = int(rows)

    def backward(grad):
        _accum(v, grad.sum(axis=0))

    value = np.broadcast_to(v.value, (rows, v.value.shape[0])).copy()
    return v.graph._op("broadcast_rows", value, (v,), backward)


# ---------------------------------------------------------------------------
# linear algebra / conv


def linear(x, w, b):
    """y = x @ w + b for a 1-D x."""
    g = _same_graph("linear", x, w, b)
    if x.value.ndim != 1 or w.value.ndim != 2 or b.value.ndim != 1:
        raise ShapeError(f"linear: bad ranks {x.value.shape}, {w.value.shape}, {b.value.shape}")
    if x.value.shape[0] != w.value.shape[0] or w.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"linear: shapes {x.value.shape} @ {w.value.shape} + {b.value.shape}")

    def backward(grad):
        _accum(x, w.value @ grad)
        _accum(w, np.outer(x.value, grad))
        _accum(b, grad)

    return g._op("linear", x.value @ w.value + b.value, (x, w, b), backward)


def _im2col(x, kh, kw, ph, pw):
    """(H,W,C) -> (H'*W', kh*kw*C) patch matrix, zero-padded."""
    if ph or pw:
        x = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    h2, w2 = win.shape[0], win.shape[1]
    cols = win.transpose(0, 1, 3, 4, 2).reshape(h2 * w2, kh * kw * x.shape[2])
    return cols, h2, w2


def conv2d(x, w, b):
    """3x3-style same-padded convolution: x (H,W,Cin), w (kh,kw,Cin,Cout), b (Cout,)."""
    g = _same_graph("conv2d", x, w, b)
    if x.value.ndim != 3 or w.value.ndim != 4:
        raise ShapeError(f"conv2d: bad ranks {x.value.shape}, {w.value.shape}")
    kh, kw, cin, cout = w.value.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel dims must be odd, got {kh}x{kw}")
    if x.value.shape[2] != cin or b.value.shape != (cout,):
        raise ShapeError(
            f"conv2d: x {x.value.shape} incompatible with w {w.value.shape}, b {b.value.shape}")
    ph, pw = kh // 2, kw // 2
    h, wid = x.value.shape[:2]
    cols, h2, w2 = _im2col(x.value, kh, kw, ph, pw)
    wmat = w.value.reshape(kh * kw * cin, cout)
    y = (cols @ wmat + b.value).reshape(h2, w2, cout)

    def backward(grad):
        g2 = grad.reshape(h2 * w2, cout)
        if w.requires_grad:
            _accum(w, (cols.T @ g2).reshape(kh, kw, cin, cout))
        if b.requires_grad:
            _accum(b, g2.sum(axis=0))
        if x.requires_grad:
            wflip = w.value[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * cout, cin)
            gcols, _, _ = _im2col(grad, kh, kw, kh - 1 - ph, kw - 1 - pw)
            _accum(x, (gcols @ wflip).reshape(h, wid, cin))

    return g._op("conv2d", y, (x, w, b), backward)


def depthwise_blur(x, kernel):
    """Valid-padded per-channel correlation with a fixed 2-D kernel (not a node)."""
    kernel = np.asarray(kernel, dtype=x.graph.dtype)
    kh, kw = kernel.shape
    h, w, c = x.value.shape
    if kh > h or kw > w:
        raise ShapeError(f"depthwise_blur: kernel {kernel.shape} larger than image {x.value.shape}")
    kflat = kernel.reshape(-1)

    def _apply(arr, ph, pw):
        if ph or pw:
            arr = np.pad(arr, ((ph, ph), (pw, pw), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(arr, (kh, kw), axis=(0, 1))
        h2, w2 = win.shape[0], win.shape[1]
        flat = win.transpose(0, 1, 2, 3, 4).reshape(h2 * w2 * arr.shape[2], kh * kw)
        return (flat @ kflat).reshape(h2, w2, arr.shape[2])

    y = _apply(x.value, 0, 0)
    kflip = kernel[::-1, ::-1].reshape(-1)

    def backward(grad):
        gp = np.pad(grad, ((kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(gp, (kh, kw), axis=(0, 1))
        flat = win.reshape(h * w * c, kh * kw)
        _accum(x, (flat @ kflip).reshape(h, w, c))

    return x.graph._op("depthwise_blur", y, (x,), backward)


def upsample2x(x):
    """Nearest-neighbour 2x upsampling of an (H,W,C) tensor."""
    if x.value.ndim != 3:
        raise ShapeError(f"upsample2x: expected (H,W,C), got {x.value.shape}")
    h, w, c = x.value.shape

    def backward(grad):
        _accum(x, grad.reshape(h, 2, w, 2, c).sum(axis=(1, 3)))

    return x.graph._op("upsample2x", x.value.repeat(2, axis=0).repeat(2, axis=1), (x,), backward)


def avgpool2x(x):
    """2x2 average pooling, stride 2; spatial dims must be even."""
    if x.value.ndim != 3:
        raise ShapeError(f"avgpool2x: expected (H,W,C), got {x.value.shape}")
    h, w, c = x.value.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2x: odd spatial dims {x.value.shape}")
    y = x.value.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))

    def backward(grad):
        _accum(x, (grad * 0.25).repeat(2, axis=0).repeat(2, axis=1))

    return x.graph._op("avgpool2x", y, (x,), backward)


def channel_norm(x, eps=1e-4):
    """Instance normalization without affine: per channel over spatial dims."""
    if x.value.ndim != 3:
        raise ShapeError(f"channel_norm: expected (H,W,C), got {x.value.shape}")
    h, w, _ = x.value.shape
    n = h * w
    mu = x.value.mean(axis=(0, 1))
    var = x.value.var(axis=(0, 1))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv

    def backward(grad):
        gsum = grad.sum(axis=(0, 1))
        gxsum = (grad * xhat).sum(axis=(0, 1))
        _accum(x, (inv / n) * (n * grad - gsum - xhat * gxsum))

    return x.graph._op("channel_norm", xhat, (x,), backward)


def modulate(x, scale, shift):
    """Per-channel y = x * scale[c] + shift[c]; scale/shift are (C,) nodes."""
    g = _same_graph("modulate", x, scale, shift)
    c = x.value.shape[-1]
    if scale.value.shape != (c,) or shift.value.shape != (c,):
        raise ShapeError(
            f"modulate: style shapes {scale.value.shape}/{shift.value.shape} vs channels {c}")

    def backward(grad):
        _accum(x, grad * scale.value)
        if scale.requires_grad:
            _accum(scale, (grad * x.value).sum(axis=(0, 1)))
        if shift.requires_grad:
            _accum(shift, grad.sum(axis=(0, 1)))

    return g._op("modulate", x.value * scale.value + shift.value, (x, scale, shift), backward)


# ---------------------------------------------------------------------------
# reductions and losses


def sum_all(x):
    def backward(grad):
        _accum(x, np.full(x.value.shape, grad, dtype=x.graph.dtype))

    return x.graph._op("sum_all", np.asarray(x.value.sum(), dtype=x.graph.dtype), (x,), backward)


def mean_all(x):
    n = x.value.size

    def backward(grad):
        _accum(x, np.full(x.value.shape, grad / n, dtype=x.graph.dtype))

    return x.graph._op("mean_all", np.asarray(x.value.mean(), dtype=x.graph.dtype), (x,), backward)


def mse(a, b):
    """mean((a - b)^2), a scalar node."""
    g = _same_graph("mse", a, b)
    _want_same_shape("mse", a, b)
    d = a.value - b.value
    n = d.size

    def backward(grad):
        ga = grad * (2.0 / n) * d
        _accum(a, ga)
        _accum(b, -ga)

    return g._op("mse", np.asarray(np.mean(d * d), dtype=g.dtype), (a, b), backward)


def l1_to_const(x, c):
    """sum |x - c| against a fixed array; subgradient at ties is 0."""
    c = np.asarray(c, dtype=x.graph.dtype)
    if c.shape != x.value.shape:
        raise ShapeError(f"l1_to_const: shape mismatch {x.value.shape} vs {c.shape}")
    d = x.value - c

    def backward(grad):
        _accum(x, grad * np.sign(d))

    return x.graph._op("l1_to_const", np.asarray(np.abs(d).sum(), dtype=x.graph.dtype), (x,), backward)


def sse_to_const(x, c):
    """sum (x - c)^2 against a fixed array."""
    c = np.asarray(c, dtype=x.graph.dtype)
    if c.shape != x.value.shape:
        raise ShapeError(f"sse_to_const: shape mismatch {x.value.shape} vs {c.shape}")
    d = x.value - c

    def backward(grad):
        _accum(x, grad * (2.0 * d))

    return x.graph._op("sse_to_const", np.asarray((d * d).sum(), dtype=x.graph.dtype), (x,), backward)


def dot(u, v):
    g = _same_graph("dot", u, v)
    if u.value.ndim != 1 or v.value.ndim != 1 or u.value.shape != v.value.shape:
        raise ShapeError(f"dot: bad shapes {u.value.shape}, {v.value.shape}")

    def backward(grad):
        _accum(u, grad * v.value)
        _accum(v, grad * u.value)

    return g._op("dot", np.asarray(u.value @ v.value, dtype=g.dtype), (u, v), backward)


def l2_normalize(x, tiny=1e-12):
    """x / ||x||_2 for a 1-D vector; errors on a degenerate (near-zero) input.

    The norm is accumulated in 64-bit: squares of large float32 values
    overflow in 32-bit, and a silently infinite norm would zero the output.
    """
    if x.value.ndim != 1:
        raise ShapeError(f"l2_normalize: expected 1-D, got {x.value.shape}")
    norm = float(np.sqrt(np.sum(np.square(x.value, dtype=np.float64))))
    if norm < tiny:
        raise GraphError(f"l2_normalize: degenerate input with norm {norm:.3e} in {x.name}")
    y = x.value / norm

    def backward(grad):
        _accum(x, (grad - y * np.dot(y, grad)) / norm)

    return x.graph._op("l2_normalize", y.astype(x.graph.dtype), (x,), backward)


# ---------------------------------------------------------------------------
# whole-graph entry points


def evaluate_and_backprop(build, variables, constants=None, dtype=None):
    """Evaluate a scalar-valued graph and differentiate it.

    build(graph, leaves) receives a fresh Graph plus a dict of leaf nodes
    and must return the terminal scalar node. Returns (loss value, dict of
    gradients for every variable leaf).
    """
    g = Graph(dtype=dtype)
    leaves = {}
    for name, val in (constants or {}).items():
        leaves[name] = g.constant(name, val)
    for name, val in variables.items():
        leaves[name] = g.variable(name, val)
    out = build(g, leaves)
    if out.value.shape != ():
        raise ShapeError(f"node {out.name}: terminal node must be scalar, got {out.value.shape}")
    g.backward(out)
    grads = {}
    for name in variables:
        leaf = leaves[name]
        grads[name] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
    return float(out.value), grads


def finite_difference_grad(build, variables, constants=None, h=1e-4):
    """Central-difference gradients in 64-bit: the verification-mode oracle.

    Independent of the adjoint rules: only re-evaluates the forward pass.
    """

    def value_at(vs):
        g = Graph(dtype=np.float64)
        leaves = {}
        for name, val in (constants or {}).items():
            leaves[name] = g.constant(name, np.asarray(val, dtype=np.float64))
        for name, val in vs.items():
            leaves[name] = g.variable(name, val)
        return float(build(g, leaves).value)

    base = {name: np.asarray(val, dtype=np.float64).copy() for name, val in variables.items()}
    grads = {}
    for name, val in base.items():
        grad = np.zeros_like(val)
        flat = val.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            hi = value_at(base)
            flat[i] = keep - h
            lo = value_at(base)
            flat[i] = keep
            gflat[i] = (hi - lo) / (2.0 * h)
        grads[name] = grad
    return grads
