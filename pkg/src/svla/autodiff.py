"""Dense tensor engine with reverse-mode automatic differentiation.

Define-by-run: every primitive records its inputs and a backward closure
on the produced tensor, and `backward()` walks the recorded tape in
reverse topological order. The primitive set is fixed to what the policy
network needs (conv, matmul, elementwise, softmax, layer norm, gather,
shape ops, reductions, cross-entropy); broadcasting is supported only in
the elementwise ops and bias adds, with gradients sum-reduced back to the
operand shape.

Training runs in float32; gradient checking runs the same code in float64.
"""
from __future__ import annotations

import numpy as np

from . import kernels

FLOAT_DTYPES = (np.float32, np.float64)


class GraphError(ValueError):
    """Shape or argument error in a graph primitive, tagged with the op name."""


class _GradMode:
    enabled = True


class no_grad:
    """Context manager / decorator disabling tape recording."""

    def __enter__(self):
        self._prev = _GradMode.enabled
        _GradMode.enabled = False

    def __exit__(self, *exc):
        _GradMode.enabled = self._prev

    def __call__(self, fn):
        def wrapped(*args, **kwargs):
            with self:
                return fn(*args, **kwargs)

        return wrapped


# Active NaN watch list; ops append (op_name,) entries when an output
# contains non-finite values. Enabled only inside Graph.evaluate.
_nan_watch = None


def _check_finite(op, data):
    if _nan_watch is not None and data.dtype in (np.float32, np.float64):
        if not np.all(np.isfinite(data)):
            _nan_watch.append(op)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64, np.int64, np.int32):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"
        self.name = name

    # -- basic introspection ------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self.op})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, like=self), -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def backward(self, grad=None):
        backward(self, grad)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(op, data, parents, backward_fn):
    """Record one tape node."""
    _check_finite(op, data)
    out = Tensor(data)
    out.op = op
    if _GradMode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Sum-reduce a broadcast gradient back to `shape`."""
    if grad.shape == shape:
        return grad
    ddim = grad.ndim - len(shape)
    if ddim > 0:
        grad = grad.sum(axis=tuple(range(ddim)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(t: Tensor, grad=None):
    """Reverse-mode sweep from `t`; accumulates into .grad of leaf tensors."""
    if grad is None:
        if t.size != 1:
            raise GraphError("backward: implicit gradient requires a scalar loss")
        grad = np.ones_like(t.data)
    else:
        grad = np.asarray(grad, dtype=t.dtype)

    # Topological order over the recorded tape.
    order = []
    seen = set()
    stack = [(t, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(t): grad}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or node._backward is None:
            if g is not None and node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in node._backward(g):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.dtype)
            if parent._backward is None:
                parent.grad = pg if parent.grad is None else parent.grad + pg
            else:
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise GraphError(f"add: {e}") from None

    def bwd(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _make("add", data, (a, b), bwd)


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise GraphError(f"mul: {e}") from None

    def bwd(g):
        return (
            (a, _unbroadcast(g * b.data, a.shape)),
            (b, _unbroadcast(g * a.data, b.shape)),
        )

    return _make("mul", data, (a, b), bwd)


def relu(x):
    x = _as_tensor(x)
    data = np.maximum(x.data, 0)

    def bwd(g):
        return ((x, g * (x.data > 0)),)

    return _make("relu", data, (x,), bwd)


# -- matmul / conv ----------------------------------------------------------

def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise GraphError(f"matmul: operands must be >=2-d, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise GraphError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ((a, _unbroadcast(ga, a.shape)), (b, _unbroadcast(gb, b.shape)))

    return _make("matmul", data, (a, b), bwd)


def conv2d(x, w, bias=None, stride=1, pad=0):
    """NHWC conv: x (N,H,W,Cin), w (kh,kw,Cin,Cout), bias (Cout,)."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise GraphError(f"conv2d: expected 4-d x and w, got {x.shape}, {w.shape}")
    kh, kw, cin, cout = w.shape
    if x.shape[3] != cin:
        raise GraphError(f"conv2d: channel mismatch, x has {x.shape[3]}, w expects {cin}")
    n, h, ww_, _ = x.shape
    ho = kernels.conv_out_size(h, kh, stride, pad)
    wo = kernels.conv_out_size(ww_, kw, stride, pad)
    if ho <= 0 or wo <= 0:
        raise GraphError(f"conv2d: empty output grid for input {x.shape}")
    cols = kernels.im2col(x.data, kh, kw, stride, pad)
    flat = cols.reshape(n * ho * wo, kh * kw * cin)
    out = flat @ w.data.reshape(kh * kw * cin, cout)
    if bias is not None:
        bias = _as_tensor(bias)
        out = out + bias.data
    data = out.reshape(n, ho, wo, cout)

    def bwd(g):
        gflat = g.reshape(n * ho * wo, cout)
        gw = (flat.T @ gflat).reshape(w.shape)
        dcols = gflat @ w.data.reshape(kh * kw * cin, cout).T
        gx = kernels.col2im(
            dcols.reshape(n, ho, wo, kh * kw * cin), x.shape, kh, kw, stride, pad
        )
        grads = [(x, gx), (w, gw)]
        if bias is not None:
            grads.append((bias, gflat.sum(axis=0)))
        return grads

    parents = (x, w) if bias is None else (x, w, bias)
    return _make("conv2d", data, parents, bwd)


# -- normalisation / softmax ------------------------------------------------

def softmax(x, axis=-1):
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return ((x, data * (g - dot)),)

    return _make("softmax", data, (x,), bwd)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise over the last axis, then scale/shift per feature."""
    x = _as_tensor(x)
    gamma = _as_tensor(gamma)
    beta = _as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise GraphError(
            f"layer_norm: gamma/beta must be ({x.shape[-1]},), got {gamma.shape}, {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gamma.data + beta.data

    def bwd(g):
        d = x.shape[-1]
        gg = (g * xhat).sum(axis=tuple(range(g.ndim - 1)))
        gb = g.sum(axis=tuple(range(g.ndim - 1)))
        gxhat = g * gamma.data
        gx = inv / d * (
            d * gxhat
            - gxhat.sum(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return ((x, gx), (gamma, gg), (beta, gb))

    return _make("layer_norm", data, (x, gamma, beta), bwd)


# -- shape ops --------------------------------------------------------------

def reshape(x, *shape):
    x = _as_tensor(x)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    try:
        data = x.data.reshape(shape)
    except ValueError as e:
        raise GraphError(f"reshape: {e}") from None

    def bwd(g):
        return ((x, g.reshape(x.shape)),)

    return _make("reshape", data, (x,), bwd)


def transpose(x, axes):
    x = _as_tensor(x)
    axes = tuple(axes)
    data = np.transpose(x.data, axes)
    inv = np.argsort(axes)

    def bwd(g):
        return ((x, np.transpose(g, inv)),)

    return _make("transpose", data, (x,), bwd)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise GraphError("concat: empty input list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise GraphError(f"concat: {e}") from None
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(zip(tensors, pieces))

    return _make("concat", data, tuple(tensors), bwd)


def index(x, key):
    """Basic (non-overlapping) indexing/slicing with scatter-add backward."""
    x = _as_tensor(x)
    data = x.data[key]

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return ((x, gx),)

    return _make("index", data, (x,), bwd)


def embedding(table, indices):
    """Row lookup: table (V,D), indices int array -> (*idx_shape, D)."""
    table = _as_tensor(table)
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise GraphError("embedding: indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise GraphError("embedding: index out of range")
    data = table.data[idx]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return ((table, gt),)

    return _make("embedding", data, (table,), bwd)


# -- reductions / losses ----------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return ((x, np.broadcast_to(g, x.shape).copy()),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g2, x.shape).copy()),)

    return _make("sum", data, (x,), bwd)


def mean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    s = sum_(x, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / n)


def cross_entropy(logits, targets):
    """Mean cross-entropy of integer `targets` under `logits` (N,K)."""
    logits = _as_tensor(logits)
    t = np.asarray(targets)
    if logits.ndim != 2:
        raise GraphError(f"cross_entropy: logits must be 2-d, got {logits.shape}")
    n, k = logits.shape
    if t.shape != (n,):
        raise GraphError(f"cross_entropy: targets must be ({n},), got {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= k):
        raise GraphError("cross_entropy: target index out of range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    data = np.asarray(-logp[np.arange(n), t].mean(), dtype=logits.dtype)

    def bwd(g):
        p = np.exp(logp)
        p[np.arange(n), t] -= 1.0
        return ((logits, g * p / n),)

    return _make("cross_entropy", data, (logits,), bwd)
