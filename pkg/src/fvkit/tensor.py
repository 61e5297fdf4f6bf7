"""Dense NCHW tensor with reverse-mode gradients.

A :class:`Tensor` wraps a numpy array. Operations in :mod:`fvkit.functional`
build new tensors that remember their inputs and a backward closure; calling
:meth:`Tensor.backward` on a scalar sweeps that lineage in reverse
topological order and accumulates ``grad`` on every ancestor that requires
it.

Data is float32. The gradient-check path constructs float64 tensors
explicitly and every op preserves the input dtype.
"""

from contextlib import contextmanager

import numpy as np

from .errors import ShapeError

_DETERMINISTIC = True


def is_deterministic():
    return _DETERMINISTIC


def set_deterministic(flag):
    """Select the fixed-order kernels (True) or the BLAS-backed ones."""
    global _DETERMINISTIC
    _DETERMINISTIC = bool(flag)


@contextmanager
def deterministic(flag=True):
    previous = _DETERMINISTIC
    set_deterministic(flag)
    try:
        yield
    finally:
        set_deterministic(previous)


def _as_float_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is None:
        dtype = np.float64 if arr.dtype == np.float64 else np.float32
    return np.asarray(arr, dtype=dtype, order="C")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _op=None):
        self.data = _as_float_array(data, dtype)
        if self.data.ndim and min(self.data.shape) < 1:
            raise ShapeError(f"tensor extents must be >= 1, got {self.data.shape}")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = _op
        self._parents = tuple(_parents)
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def backward(self):
        """Populate ``grad`` on every ancestor with ``requires_grad``."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward() needs a scalar output, got shape {self.shape}"
            )
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def make_result(data, parents, op, backward):
    """Wrap an op output; attach lineage only when an input needs grad."""
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype, _op=op,
                 _parents=parents if needs else ())
    if needs:
        out._backward = backward
    return out


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)
