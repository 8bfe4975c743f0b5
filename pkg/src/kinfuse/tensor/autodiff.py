"""Reverse-mode autodiff over float64 numpy arrays.

Define-by-run: every primitive returns a new ``Tensor`` holding its value
and a closure that scatters the upstream gradient to the parents. Calling
``backward()`` on a scalar output walks the recorded DAG once in reverse
topological order. The primitive set is exactly what the segment-wise
conv + LSTM + attention + dense architecture needs, nothing more.
"""

import numpy as np

from . import kernels as K


class ShapeMismatchError(ValueError):
    """Raised by a primitive whose input shapes are inconsistent."""


def _as_array(data):
    a = np.asarray(data, dtype=np.float64)
    return a


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, parents=(), op="leaf"):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape})"

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad and not self._parents:
            return  # constant leaf; nothing upstream wants this gradient
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or not g.flags.owndata else g
        else:
            self.grad = self.grad + g

    def backward(self):
        """Backpropagate from this scalar-valued node."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar output, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar for the tests and loss expressions
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return div(self, other)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _reduce_to_shape(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    nd = len(shape)
    extra = grad.ndim - nd
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i in range(nd) if shape[i] == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a, b, out_data, op, da, db):
    out = Tensor(out_data, parents=(a, b), op=op)

    def _bw(g):
        a._accumulate(_reduce_to_shape(da(g), a.data.shape))
        b._accumulate(_reduce_to_shape(db(g), b.data.shape))

    out._backward = _bw
    return out


def add(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data + b.data, "add", lambda g: g, lambda g: g)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data - b.data, "sub", lambda g: g, lambda g: -g)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data * b.data, "mul",
                   lambda g: g * b.data, lambda g: g * a.data)


def div(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data / b.data, "div",
                   lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data * b.data))


def neg(a):
    out = Tensor(-a.data, parents=(a,), op="neg")
    out._backward = lambda g: a._accumulate(-g)
    return out


def _unary(a, out_data, op, deriv):
    out = Tensor(out_data, parents=(a,), op=op)
    out._backward = lambda g: a._accumulate(g * deriv())
    return out


def relu(a):
    mask = a.data > 0
    return _unary(a, a.data * mask, "relu", lambda: mask)


def tanh(a):
    t = np.tanh(a.data)
    return _unary(a, t, "tanh", lambda: 1.0 - t * t)


def sigmoid(a):
    s = 1.0 / (1.0 + np.exp(-a.data))
    return _unary(a, s, "sigmoid", lambda: s * (1.0 - s))


def exp(a):
    e = np.exp(a.data)
    return _unary(a, e, "exp", lambda: e)


def log(a):
    return _unary(a, np.log(a.data), "log", lambda: 1.0 / a.data)


def sqrt(a):
    r = np.sqrt(a.data)
    return _unary(a, r, "sqrt", lambda: 0.5 / r)


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape), parents=(a,), op="reshape")
    out._backward = lambda g: a._accumulate(g.reshape(a.data.shape))
    return out


def transpose(a, axes):
    inv = np.argsort(axes)
    out = Tensor(a.data.transpose(axes), parents=(a,), op="transpose")
    out._backward = lambda g: a._accumulate(g.transpose(inv))
    return out


def sum_(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,), op="sum")

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    out._backward = _bw
    return out


def mean(a, axis=None, keepdims=False):
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims), parents=(a,), op="mean")
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape) / n)

    out._backward = _bw
    return out


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(
            f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, parents=(a, b), op="matmul")

    def _bw(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    out._backward = _bw
    return out


def linear(x, w, b):
    """x (B, n) @ w (m, n)^T + b (m,) -> (B, m)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeMismatchError(
            f"linear: input {x.data.shape} does not match weight {w.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ShapeMismatchError(
            f"linear: bias {b.data.shape} does not match weight {w.data.shape}")
    out = Tensor(x.data @ w.data.T + b.data, parents=(x, w, b), op="linear")

    def _bw(g):
        x._accumulate(g @ w.data)
        w._accumulate(g.T @ x.data)
        b._accumulate(g.sum(axis=0))

    out._backward = _bw
    return out


def select(a, axis, index):
    """Take a single slice along ``axis`` (removes the axis)."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = index
    idx = tuple(idx)
    out = Tensor(a.data[idx], parents=(a,), op="select")

    def _bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a._accumulate(full)

    out._backward = _bw
    return out


def stack(tensors, axis=1):
    out = Tensor(np.stack([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors), op="stack")

    def _bw(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))

    out._backward = _bw
    return out


def gather_rows(a, index):
    """a (B, c), integer index (B,) -> (B,) picking one column per row."""
    index = np.asarray(index)
    if a.data.ndim != 2 or index.shape != (a.data.shape[0],):
        raise ShapeMismatchError(
            f"gather_rows: got values {a.data.shape} and index {index.shape}")
    rows = np.arange(a.data.shape[0])
    out = Tensor(a.data[rows, index], parents=(a,), op="gather_rows")

    def _bw(g):
        full = np.zeros_like(a.data)
        full[rows, index] = g
        a._accumulate(full)

    out._backward = _bw
    return out


def softmax(a, temperature=1.0, axis=-1):
    """Temperature softmax, stabilized by max-logit subtraction."""
    if temperature <= 0:
        raise ValueError(f"softmax temperature must be positive, got {temperature}")
    z = a.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, parents=(a,), op="softmax")

    def _bw(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        a._accumulate(s * (g - dot) / temperature)

    out._backward = _bw
    return out


def log_softmax(a, temperature=1.0, axis=-1):
    """log of the temperature softmax; stable at any logit scale."""
    if temperature <= 0:
        raise ValueError(f"softmax temperature must be positive, got {temperature}")
    z = a.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out_data = z - lse
    s = np.exp(out_data)
    out = Tensor(out_data, parents=(a,), op="log_softmax")

    def _bw(g):
        tot = g.sum(axis=axis, keepdims=True)
        a._accumulate((g - s * tot) / temperature)

    out._backward = _bw
    return out


def conv1d(x, w, b, stride=1):
    """Valid (unpadded) 1-D convolution: x (B, C, L), w (F, C, K), b (F,)."""
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeMismatchError(
            f"conv1d: expected 3-d input and weight, got {x.data.shape}, {w.data.shape}")
    B, C, L = x.data.shape
    F, Cw, Kk = w.data.shape
    if Cw != C:
        raise ShapeMismatchError(
            f"conv1d: input has {C} channels but weight expects {Cw}")
    if b.data.shape != (F,):
        raise ShapeMismatchError(f"conv1d: bias shape {b.data.shape} != ({F},)")
    if Kk > L:
        raise ShapeMismatchError(
            f"conv1d: kernel size {Kk} exceeds input length {L}")
    if stride < 1:
        raise ValueError(f"conv1d: stride must be >= 1, got {stride}")
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    out = Tensor(K.conv1d_forward(xd, wd, b.data, stride),
                 parents=(x, w, b), op="conv1d")

    def _bw(g):
        gx, gw, gb = K.conv1d_backward(xd, wd, stride, np.ascontiguousarray(g))
        x._accumulate(gx)
        w._accumulate(gw)
        b._accumulate(gb)

    out._backward = _bw
    return out


def lstm_cell(x, h_prev, c_prev, wx, wh, b):
    """One step of a standard 4-gate LSTM cell.

    x (B, I), h_prev/c_prev (B, H), wx (4H, I), wh (4H, H), b (4H,).
    Returns the pair (h, c) as two graph nodes sharing one gate cache.
    """
    B, I = x.data.shape
    H = h_prev.data.shape[1]
    if wx.data.shape != (4 * H, I):
        raise ShapeMismatchError(
            f"lstm_cell: input weight {wx.data.shape} != ({4 * H}, {I})")
    if wh.data.shape != (4 * H, H):
        raise ShapeMismatchError(
            f"lstm_cell: recurrent weight {wh.data.shape} != ({4 * H}, {H})")
    if b.data.shape != (4 * H,):
        raise ShapeMismatchError(f"lstm_cell: bias shape {b.data.shape} != ({4 * H},)")
    if c_prev.data.shape != (B, H):
        raise ShapeMismatchError(
            f"lstm_cell: cell state {c_prev.data.shape} != ({B}, {H})")
    z = x.data @ wx.data.T + h_prev.data @ wh.data.T + b.data
    h_new, c_new, cache = K.lstm_gates_forward(np.ascontiguousarray(z),
                                               np.ascontiguousarray(c_prev.data))
    parents = (x, h_prev, c_prev, wx, wh, b)
    out_h = Tensor(h_new, parents=parents, op="lstm_h")
    out_c = Tensor(c_new, parents=parents, op="lstm_c")

    def _scatter(gz, gc_prev):
        x._accumulate(gz @ wx.data)
        h_prev._accumulate(gz @ wh.data)
        c_prev._accumulate(gc_prev)
        wx._accumulate(gz.T @ x.data)
        wh._accumulate(gz.T @ h_prev.data)
        b._accumulate(gz.sum(axis=0))

    def _bw_h(g):
        _scatter(*K.lstm_gates_backward(cache, np.ascontiguousarray(g), None))

    def _bw_c(g):
        _scatter(*K.lstm_gates_backward(cache, None, np.ascontiguousarray(g)))

    out_h._backward = _bw_h
    out_c._backward = _bw_c
    return out_h, out_c
