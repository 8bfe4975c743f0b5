"""Named-input expression graphs on top of the define-by-run core.

An ``ExprGraph`` wraps a builder function from named input tensors to named
output tensors. ``eval`` runs it forward; ``backward`` differentiates one
scalar output with respect to every bound input. The recorded trace (the
topologically ordered list of primitive nodes) is available for inspection
after a forward pass.
"""

import numpy as np

from .autodiff import Tensor


class UnboundInputError(KeyError):
    """An input named by the graph was not supplied in the bindings."""


class NonScalarOutputError(ValueError):
    """backward() was asked to differentiate a non-scalar output."""


class NonFiniteValueError(FloatingPointError):
    """A forward value required to be finite was NaN or infinite."""


class ExprGraph:
    def __init__(self, builder, inputs):
        """builder maps a dict of named Tensors to a dict of named Tensors."""
        self.builder = builder
        self.inputs = tuple(inputs)
        self.last_nodes = None

    def _bind(self, bindings, requires_grad):
        missing = [name for name in self.inputs if name not in bindings]
        if missing:
            raise UnboundInputError(f"unbound graph inputs: {missing}")
        bound = {}
        for name in self.inputs:
            v = bindings[name]
            t = v if isinstance(v, Tensor) else Tensor(v)
            if requires_grad:
                t = Tensor(t.data, requires_grad=True)
            bound[name] = t
        return bound

    def _run(self, bound):
        outputs = self.builder(bound)
        if isinstance(outputs, Tensor):
            outputs = {"out": outputs}
        self.last_nodes = _trace(outputs.values())
        for name, t in outputs.items():
            if not np.all(np.isfinite(t.data)):
                raise NonFiniteValueError(f"output {name!r} contains NaN or Inf")
        return outputs

    def eval(self, bindings):
        """Forward pass; returns the named output tensors."""
        return self._run(self._bind(bindings, requires_grad=False))

    def backward(self, bindings, output):
        """Gradient of one scalar output with respect to every bound input.

        Inputs the output does not depend on get zero-filled gradients.
        """
        bound = self._bind(bindings, requires_grad=True)
        outputs = self._run(bound)
        if output not in outputs:
            raise KeyError(f"graph has no output named {output!r}")
        out = outputs[output]
        if out.data.size != 1:
            raise NonScalarOutputError(
                f"output {output!r} has shape {out.data.shape}, expected a scalar")
        out.backward()
        grads = {}
        for name, t in bound.items():
            grads[name] = np.zeros_like(t.data) if t.grad is None else t.grad
        return grads


def _trace(outputs):
    """Topologically ordered (op, shape) records for the reached nodes."""
    order = []
    visited = set()
    stack = [(t, False) for t in outputs]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append((node.op, node.data.shape))
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def grad_check(f, point, h=1e-5):
    """Max relative disagreement between backward and central differences.

    ``f`` maps a Tensor to a scalar Tensor and must be pure. The error for
    coordinate i is |analytic_i - numeric_i| / max(1, |analytic_i|).
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    point = np.asarray(point, dtype=np.float64)
    x = Tensor(point.copy(), requires_grad=True)
    out = f(x)
    if out.data.size != 1:
        raise NonScalarOutputError(f"f must be scalar-valued, got shape {out.data.shape}")
    if not np.isfinite(out.data).all():
        raise NonFiniteValueError("f(point) is not finite")
    out.backward()
    analytic = (np.zeros_like(point) if x.grad is None else x.grad).ravel()

    flat = point.ravel()
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        fp = float(f(Tensor(bumped.reshape(point.shape))).data)
        bumped[i] = flat[i] - h
        fm = float(f(Tensor(bumped.reshape(point.shape))).data)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteValueError(f"f is not finite near coordinate {i}")
        numeric[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
