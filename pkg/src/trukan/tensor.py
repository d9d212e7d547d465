"""Dense 2-D tensors with reverse-mode differentiation.

Everything in this package flows through `Tensor`: a row-major float64
matrix with an optional gradient buffer and a handle into a dynamically
built tape.  The op set is deliberately small; heavier operations (basis
kernels, losses, normalization) register themselves through `apply_op`,
which is the extension point the rest of the library uses.

Batches are rows.  Scalars are 1x1 tensors.  Broadcasting is restricted to
scalar-with-tensor and same-shape; anything richer must be a custom op.
"""

import threading

import numpy as np

_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


def _nan_checks():
    return getattr(_state, "nan_checks", False)


class no_grad:
    """Context manager disabling tape recording (thread-local)."""

    def __enter__(self):
        self.prev = _grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self.prev
        return False


def set_nan_checks(enabled):
    """Toggle finite-value validation of every op output (thread-local)."""
    _state.nan_checks = bool(enabled)


class ShapeError(ValueError):
    pass


class GradError(RuntimeError):
    pass


class TapeNode:
    """One recorded operation: parents plus a cotangent rule.

    `backward` maps the output cotangent (ndarray) to a tuple of input
    cotangents aligned with `inputs` (None for inputs that need no grad).
    """

    __slots__ = ("op_name", "inputs", "backward")

    def __init__(self, op_name, inputs, backward):
        self.op_name = op_name
        self.inputs = inputs
        self.backward = backward


def _as_matrix(data):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D; got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_matrix(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def detach(self):
        """Copy-free view with no tape handle; sendable across threads."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.node = None
        out.name = self.name
        return out

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # operator sugar
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def apply_op(op_name, inputs, value, backward):
    """Record a custom operation on the tape.

    `inputs` are the Tensor operands, `value` the forward ndarray, and
    `backward(g)` must return one cotangent ndarray (or None) per input.
    Recording is skipped when grads are globally disabled or no input
    requires them, so frozen networks build no graph.
    """
    if _nan_checks() and not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite values produced by op '{op_name}'")
    out = Tensor(value)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op_name, tuple(inputs), backward)
    return out


def _coerce_operand(other):
    if isinstance(other, Tensor):
        return other
    if isinstance(other, (int, float, np.floating, np.integer)):
        return Tensor(np.array([[float(other)]]))
    raise TypeError(f"unsupported operand type {type(other).__name__}")


def _binary_shapes(a, b, op):
    sa, sb = a.shape, b.shape
    if sa == sb or sa == (1, 1) or sb == (1, 1):
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} are neither equal nor scalar")


def _reduce_to(g, shape):
    # collapse a broadcast cotangent back onto a 1x1 operand
    if shape == (1, 1) and g.shape != (1, 1):
        return np.array([[g.sum()]])
    return g


def add(a, b):
    a, b = _coerce_operand(a), _coerce_operand(b)
    _binary_shapes(a, b, "add")
    value = a.data + b.data
    return apply_op(
        "add", (a, b), value,
        lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)),
    )


def sub(a, b):
    a, b = _coerce_operand(a), _coerce_operand(b)
    _binary_shapes(a, b, "sub")
    value = a.data - b.data
    return apply_op(
        "sub", (a, b), value,
        lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)),
    )


def mul(a, b):
    a, b = _coerce_operand(a), _coerce_operand(b)
    _binary_shapes(a, b, "mul")
    value = a.data * b.data
    ad, bd = a.data, b.data
    return apply_op(
        "mul", (a, b), value,
        lambda g: (_reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)),
    )


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims disagree, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    value = ad @ bd
    return apply_op(
        "matmul", (a, b), value,
        lambda g: (g @ bd.T, ad.T @ g),
    )


def pow_int(a, k):
    """Elementwise integer power, k >= 0."""
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise ValueError(f"pow_int requires integer exponent k >= 0, got {k!r}")
    k = int(k)
    ad = a.data
    value = ad ** k
    if k == 0:
        return apply_op("pow_int", (a,), value, lambda g: (np.zeros_like(ad),))
    dk = k * ad ** (k - 1)
    return apply_op("pow_int", (a,), value, lambda g: (g * dk,))


def clamp_min_zero(a):
    """max(x, 0); subgradient 0 below and at the kink."""
    mask = (a.data > 0).astype(np.float64)
    return apply_op("clamp_min_zero", (a,), a.data * mask, lambda g: (g * mask,))


def tsum(a):
    """Sum of all entries, as a 1x1 tensor."""
    shape = a.shape
    value = np.array([[a.data.sum()]])
    return apply_op("sum", (a,), value, lambda g: (np.full(shape, g[0, 0]),))


def tmean(a):
    shape = a.shape
    n = a.data.size
    value = np.array([[a.data.mean()]])
    return apply_op("mean", (a,), value, lambda g: (np.full(shape, g[0, 0] / n),))


def backward(root):
    """Accumulate droot/dx into x.grad for every requires_grad ancestor.

    Repeat calls keep adding (call zero_grad between steps).  Fan-out is
    handled by summing cotangents before a node's rule fires.
    """
    if root.shape != (1, 1):
        raise GradError(f"backward root must be a 1x1 scalar, got {root.shape}")
    if not root.requires_grad:
        return

    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        t, done = stack.pop()
        if done:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for parent in t.node.inputs:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    cotangents = {id(root): np.ones((1, 1))}
    for t in reversed(order):
        g = cotangents.pop(id(t), None)
        if g is None:
            continue
        if t.requires_grad:
            t.accumulate_grad(g)
        if t.node is None:
            continue
        grads = t.node.backward(g)
        for parent, pg in zip(t.node.inputs, grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in cotangents:
                cotangents[key] = cotangents[key] + pg
            else:
                cotangents[key] = pg
