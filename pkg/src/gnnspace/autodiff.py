"""Dense reverse-mode automatic differentiation over numpy arrays.

Every operation returns a :class:`Tensor`. When at least one input requires a
gradient, the result records its parents and a closure that pushes the
output gradient back to them; :meth:`Tensor.backward` replays those closures
in reverse topological order.
"""

from __future__ import annotations

import numpy as np

from gnnspace import kernels
from gnnspace.errors import ParameterError, ShapeError

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self.grad = np.asarray(grad, dtype=DTYPE).copy() if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # intermediate gradients are not kept; leaves keep theirs
                node.grad = None

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return multiply(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t, g):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _result(data, parents, backward):
    out = Tensor(data)
    live = tuple(p for p in parents if p.requires_grad)
    if live:
        out.requires_grad = True
        out._parents = live
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.name or 'lhs'}{a.shape} "
                         f"with {b.name or 'rhs'}{b.shape}") from None


# -- linear algebra and elementwise ------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.name or 'lhs'}{a.shape} @ {b.name or 'rhs'}{b.shape}")

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def multiply(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "multiply")

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def scale(a, c):
    a = as_tensor(a)
    return _result(a.data * c, (a,), lambda g: _accumulate(a, g * c))


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _result(out, (a,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != tensors[0].data.ndim or any(
                t.shape[i] != tensors[0].shape[i] for i in range(t.data.ndim) if i != ax):
            raise ShapeError(f"concat: {tensors[0].shape} vs {t.shape} along axis {axis}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=ax)):
            _accumulate(t, piece)

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def gather(a, index):
    """Rows ``a[index]``; gradients scatter-add back."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        if a.data.ndim == 2:
            _accumulate(a, kernels.segment_sum(g, index, a.shape[0]))
        else:
            out = np.zeros_like(a.data)
            np.add.at(out, index, g)
            _accumulate(a, out)

    return _result(a.data[index], (a,), backward)


# -- activations ---------------------------------------------------------------

def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: _accumulate(x, g * mask))


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope)
    return _result(x.data * factor, (x,), lambda g: _accumulate(x, g * factor))


def prelu(x, slope):
    """max(0, x) + slope * min(0, x) with a learnable scalar slope (shape (1,))."""
    x, slope = as_tensor(x), as_tensor(slope)
    pos = x.data > 0
    a = slope.data.reshape(())
    neg_part = np.where(pos, 0.0, x.data)

    def backward(g):
        _accumulate(x, g * np.where(pos, 1.0, a))
        _accumulate(slope, np.asarray((g * neg_part).sum()).reshape(slope.shape))

    return _result(np.where(pos, x.data, a * x.data), (x, slope), backward)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _result(s, (x,), lambda g: _accumulate(x, g * s * (1.0 - s)))


def swish(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _result(x.data * s, (x,), lambda g: _accumulate(x, g * (s + x.data * s * (1.0 - s))))


# -- normalization and regularization -------------------------------------------

class BatchNormState:
    """Running statistics for one batch-norm layer."""

    def __init__(self, dim, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps


def batchnorm(x, gamma, beta, state, training):
    """Per-feature normalization over rows followed by an affine map.

    Training mode uses batch statistics (biased variance) and updates the
    running estimates (unbiased variance); evaluation uses the running estimates.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 2 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batchnorm: input {x.shape} vs gamma {gamma.shape}")
    eps = state.eps
    if training:
        n = x.shape[0]
        if n < 2:
            raise ShapeError("batchnorm in training mode needs at least 2 rows")
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mu
        state.running_var = (1 - m) * state.running_var + m * var * n / (n - 1)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv

        def backward(g):
            _accumulate(gamma, (g * xhat).sum(axis=0))
            _accumulate(beta, g.sum(axis=0))
            if x.requires_grad:
                gx = g * gamma.data
                _accumulate(x, inv * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0)))
    else:
        inv = 1.0 / np.sqrt(state.running_var + eps)
        xhat = (x.data - state.running_mean) * inv

        def backward(g):
            _accumulate(gamma, (g * xhat).sum(axis=0))
            _accumulate(beta, g.sum(axis=0))
            _accumulate(x, g * gamma.data * inv)

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def dropout(x, rate, training, rng=None):
    """Inverted dropout; identity in evaluation mode or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: _accumulate(x, g * mask))


def l2_normalize(x, eps=1e-12):
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    x = as_tensor(x)
    norm = np.sqrt((x.data ** 2).sum(axis=1, keepdims=True))
    # NaN norms count as live so divergence propagates instead of being zeroed
    live = ~(norm <= eps)
    safe = np.where(live, norm, 1.0)
    y = np.where(live, x.data / safe, 0.0)

    def backward(g):
        proj = (g * y).sum(axis=1, keepdims=True)
        _accumulate(x, np.where(live, (g - y * proj) / safe, 0.0))

    return _result(y, (x,), backward)


# -- graph reductions --------------------------------------------------------------

def segment_aggregate(values, segment_ids, num_segments, mode):
    """Reduce rows of ``values`` that share a segment id.

    Empty segments produce zeros (and receive no gradient) for every mode. For
    ``max`` the gradient flows to the first row attaining the maximum.
    """
    values = as_tensor(values)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if values.data.ndim != 2 or len(seg) != values.shape[0]:
        raise ShapeError(f"segment_aggregate: values {values.shape} vs {len(seg)} segment ids")
    if len(seg) and (seg.min() < 0 or seg.max() >= num_segments):
        raise ShapeError(f"segment ids must lie in [0, {num_segments})")
    if mode == "sum":
        out = kernels.segment_sum(values.data, seg, num_segments)
        return _result(out, (values,), lambda g: _accumulate(values, g[seg]))
    if mode == "mean":
        counts = np.bincount(seg, minlength=num_segments).astype(DTYPE)
        inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)[:, None]
        out = kernels.segment_sum(values.data, seg, num_segments) * inv
        return _result(out, (values,), lambda g: _accumulate(values, (g * inv)[seg]))
    if mode == "max":
        out, arg = kernels.segment_max(values.data, seg, num_segments)

        def backward(g):
            gv = np.zeros_like(values.data)
            rows, cols = np.nonzero(arg >= 0)
            gv[arg[rows, cols], cols] += g[rows, cols]
            _accumulate(values, gv)

        return _result(out, (values,), backward)
    raise ParameterError(f"unknown aggregation mode {mode!r}")


def segment_softmax(logits, segment_ids, num_segments):
    """Softmax over rows sharing a segment id, independently per column."""
    logits = as_tensor(logits)
    seg = np.asarray(segment_ids, dtype=np.int64)
    z = logits.data
    flat = z.reshape(len(seg), -1)
    peak, _ = kernels.segment_max(flat, seg, num_segments)
    e = np.exp(flat - peak[seg])
    denom = kernels.segment_sum(e, seg, num_segments)
    p = (e / denom[seg]).reshape(z.shape)

    def backward(g):
        gf = g.reshape(len(seg), -1)
        pf = p.reshape(len(seg), -1)
        dot = kernels.segment_sum(gf * pf, seg, num_segments)
        _accumulate(logits, (pf * (gf - dot[seg])).reshape(z.shape))

    return _result(p, (logits,), backward)


# -- loss -----------------------------------------------------------------------------

def softmax_cross_entropy(logits, labels, mask=None):
    """Mean cross-entropy over the rows selected by ``mask`` (all rows when None)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or len(labels) != logits.shape[0]:
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs {len(labels)} labels")
    rows = np.arange(len(labels)) if mask is None else np.asarray(mask)
    if rows.dtype == bool:
        rows = np.flatnonzero(rows)
    if len(rows) == 0:
        raise ShapeError("softmax_cross_entropy: empty mask")
    z = logits.data[rows]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = labels[rows]
    loss = -logp[np.arange(len(rows)), y].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(len(rows)), y] -= 1.0
        full = np.zeros_like(logits.data)
        full[rows] = p * (float(g) / len(rows))
        _accumulate(logits, full)

    return _result(np.asarray(loss), (logits,), backward)


# -- verification -------------------------------------------------------------------

def gradient_check(f, x, eps=1e-6):
    """Max relative error between tape gradients and central finite differences.

    ``f`` maps a Tensor to a scalar Tensor. The error per coordinate is
    ``|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)``. An input with
    ``requires_grad=False`` gets a zero tape gradient.
    """
    x = as_tensor(x)
    x.grad = None
    out = f(x)
    if out.requires_grad:
        out.backward()
    g_ad = x.grad if x.grad is not None else np.zeros_like(x.data)
    x.grad = None
    if not x.requires_grad:
        return float(np.abs(g_ad).max(initial=0.0))
    base = x.data.copy()
    g_fd = np.zeros_like(base)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = float(f(x).data)
        flat[i] = old - eps
        lo = float(f(x).data)
        flat[i] = old
        g_fd.reshape(-1)[i] = (hi - lo) / (2 * eps)
    x.data[...] = base
    err = np.abs(g_ad - g_fd) / np.maximum(1.0, np.maximum(np.abs(g_ad), np.abs(g_fd)))
    return float(err.max(initial=0.0))
