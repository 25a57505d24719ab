"""Dense-tensor computation graph with reverse-mode differentiation.

A ``Graph`` is an eager tape: every primitive executes immediately on
float64 numpy arrays and appends one node, so append order is already a
topological order.  ``Graph.backward`` walks the tape in reverse and
accumulates adjoints into the leaves.

Double backprop for gradient penalties is handled by
``input_gradient_expression``, which emits the backward pass of an MLP
through its input as ordinary forward nodes; one reverse sweep then
differentiates the penalty with respect to the weights.  There is no
higher-order tape.

Graphs are single-worker objects: build, run backward, discard.  They
share no state, so independent graphs can live on concurrent workers.
"""

from __future__ import annotations

import os

import numpy as np

from srtc import _kernels

__all__ = [
    "GraphError",
    "Graph",
    "Tensor",
    "matmul",
    "transpose",
    "relu",
    "heaviside",
    "tanh",
    "exp",
    "log",
    "softplus",
    "sqrt",
    "absolute",
    "arccos",
    "cos",
    "clip_min",
    "reduce_sum",
    "reduce_max",
    "mean",
    "concat",
    "narrow",
    "row_norms",
    "input_gradient_expression",
]

# Full per-node finite checking is opt-in (debug); the risky primitives
# (div, log, sqrt, exp) always validate their outputs.
_FULL_FINITE = os.environ.get("SRTC_FINITE_CHECKS", "").lower() == "full"

# arccos snaps cosines within this distance of +/-1 onto the endpoint so
# that exactly-aligned inputs give an exactly-zero angle; the gradient is
# taken as 0 inside the snapped band (see losses.angular_gap).
_ACOS_SNAP = 1e-12

# Floor applied to sqrt outputs in the backward pass; keeps the adjoint
# of a zero-length norm finite (subgradient 0 instead of inf*0 = nan).
_SQRT_GRAD_FLOOR = 1e-15


class GraphError(ValueError):
    """Shape, domain, or graph-mixing error raised at node construction."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """One value on a graph: a float64 array plus its adjoint slot."""

    __slots__ = ("data", "grad", "graph", "requires_grad", "name", "tid")

    def __init__(self, data: np.ndarray, graph: "Graph", requires_grad: bool,
                 name: str | None = None):
        self.data = data
        self.grad: np.ndarray | None = None
        self.graph = graph
        self.requires_grad = requires_grad
        self.name = name
        self.tid = graph._register(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        label = self.name or f"t{self.tid}"
        return f"Tensor({label}, shape={self.data.shape})"

    # Operator sugar; python scalars are lifted to constants on the fly.
    def __add__(self, other):
        return add(self, _lift(other, self.graph))

    def __radd__(self, other):
        return add(_lift(other, self.graph), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self.graph))

    def __rsub__(self, other):
        return sub(_lift(other, self.graph), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self.graph))

    def __rmul__(self, other):
        return mul(_lift(other, self.graph), self)

    def __truediv__(self, other):
        return div(self, _lift(other, self.graph))

    def __rtruediv__(self, other):
        return div(_lift(other, self.graph), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("op", "out", "inputs", "backward")

    def __init__(self, op, out, inputs, backward):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Graph:
    """Append-only tape of primitive operations."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._tensors: list[Tensor] = []
        self._params: dict[str, Tensor] = {}

    def _register(self, t: Tensor) -> int:
        self._tensors.append(t)
        return len(self._tensors) - 1

    def constant(self, value, name: str | None = None) -> Tensor:
        """Leaf that never receives gradients (frozen weights, data)."""
        arr = _as_array(value)
        _require_finite(arr, "constant", name)
        return Tensor(arr, self, requires_grad=False, name=name)

    def leaf(self, value, name: str | None = None) -> Tensor:
        """Gradient-tracked leaf that is not a parameter (e.g. an input)."""
        arr = _as_array(value)
        _require_finite(arr, "leaf", name)
        return Tensor(arr, self, requires_grad=True, name=name)

    def param(self, value, name: str) -> Tensor:
        """Gradient-tracked leaf registered under a unique parameter name."""
        if name in self._params:
            raise GraphError(f"duplicate parameter name {name!r}")
        t = self.leaf(value, name=name)
        self._params[name] = t
        return t

    def zero_grad(self) -> None:
        for t in self._tensors:
            t.grad = None

    def backward(self, out: Tensor, reset: bool = True) -> dict[str, np.ndarray]:
        """Reverse sweep from a scalar; returns parameter-name -> gradient.

        Adjoints are also left on every gradient-tracked tensor's
        ``.grad``.  With ``reset`` (default) previous adjoints are cleared
        first, so separate objectives on one graph stay independent.
        """
        if out.graph is not self:
            raise GraphError("output tensor belongs to a different graph")
        if out.data.size != 1:
            raise GraphError(
                f"backward seed must be scalar, got shape {out.data.shape}")
        if reset:
            self.zero_grad()
        out.grad = np.ones_like(out.data)
        for node in reversed(self.nodes):
            og = node.out.grad
            if og is None or node.backward is None:
                continue
            for t, g in zip(node.inputs, node.backward(og)):
                if g is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += _unbroadcast(g, t.data.shape)
        return {name: t.grad for name, t in self._params.items()
                if t.grad is not None}


def _lift(value, graph: Graph) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return graph.constant(value)


def _require_finite(arr: np.ndarray, op: str, name=None) -> None:
    if not np.isfinite(arr).all():
        where = f" ({name})" if name else ""
        raise GraphError(f"{op}{where} produced non-finite values")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _emit(graph: Graph, op: str, data: np.ndarray, inputs: tuple[Tensor, ...],
          backward, track: bool | None = None) -> Tensor:
    if _FULL_FINITE:
        _require_finite(data, op)
    requires = any(t.requires_grad for t in inputs) if track is None else track
    out = Tensor(data, graph, requires_grad=requires)
    graph.nodes.append(
        _Node(op, out, inputs, backward if requires else None))
    return out


def _same_graph(op: str, *tensors: Tensor) -> Graph:
    graph = tensors[0].graph
    for t in tensors[1:]:
        if t.graph is not graph:
            raise GraphError(f"{op}: operands belong to different graphs")
    return graph


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError as err:
        raise GraphError(
            f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}"
        ) from err


def add(a: Tensor, b: Tensor) -> Tensor:
    g = _same_graph("add", a, b)
    _check_broadcast("add", a, b)
    return _emit(g, "add", a.data + b.data, (a, b),
                 lambda og: (og, og))


def sub(a: Tensor, b: Tensor) -> Tensor:
    g = _same_graph("sub", a, b)
    _check_broadcast("sub", a, b)
    return _emit(g, "sub", a.data - b.data, (a, b),
                 lambda og: (og, -og))


def mul(a: Tensor, b: Tensor) -> Tensor:
    g = _same_graph("mul", a, b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return _emit(g, "mul", ad * bd, (a, b),
                 lambda og: (og * bd, og * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    g = _same_graph("div", a, b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd
    _require_finite(out, "div")
    return _emit(g, "div", out, (a, b),
                 lambda og: (og / bd, -og * ad / (bd * bd)))


def neg(a: Tensor) -> Tensor:
    return _emit(a.graph, "neg", -a.data, (a,), lambda og: (-og,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    g = _same_graph("matmul", a, b)
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise GraphError(
            f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
    return _emit(g, "matmul", ad @ bd, (a, b),
                 lambda og: (og @ bd.T, ad.T @ og))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise GraphError(f"transpose: expected 2-d, got shape {a.data.shape}")
    return _emit(a.graph, "transpose", np.ascontiguousarray(a.data.T), (a,),
                 lambda og: (og.T,))


def relu(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(a.graph, "relu", _kernels.relu_fwd(ad), (a,),
                 lambda og: (_kernels.relu_bwd(og, ad),))


def heaviside(a: Tensor) -> Tensor:
    """Step indicator 1[x > 0]; derivative is 0 a.e., so no gradient."""
    data = (a.data > 0.0).astype(np.float64)
    return _emit(a.graph, "heaviside", data, (a,), None, track=False)


def tanh(a: Tensor) -> Tensor:
    y = _kernels.tanh_fwd(a.data)
    return _emit(a.graph, "tanh", y, (a,),
                 lambda og: (_kernels.tanh_bwd(og, y),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    _require_finite(y, "exp")
    return _emit(a.graph, "exp", y, (a,), lambda og: (og * y,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.data)
    _require_finite(y, "log")
    ad = a.data
    return _emit(a.graph, "log", y, (a,), lambda og: (og / ad,))


def softplus(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(a.graph, "softplus", _kernels.softplus_fwd(ad), (a,),
                 lambda og: (_kernels.softplus_bwd(og, ad),))


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        y = np.sqrt(a.data)
    _require_finite(y, "sqrt")
    safe = np.maximum(y, _SQRT_GRAD_FLOOR)
    return _emit(a.graph, "sqrt", y, (a,),
                 lambda og: (og / (2.0 * safe),))


def absolute(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(a.graph, "abs", np.abs(ad), (a,),
                 lambda og: (og * np.sign(ad),))


def arccos(a: Tensor) -> Tensor:
    """arccos with inputs clipped to [-1, 1].

    Values within 1e-12 of an endpoint snap onto it, so cosines that are
    1 up to rounding give an angle of exactly 0.  The gradient is 0 in
    the snapped band and -1/sqrt(1-x^2) elsewhere.
    """
    x = np.clip(a.data, -1.0, 1.0)
    x = np.where(x >= 1.0 - _ACOS_SNAP, 1.0, x)
    x = np.where(x <= -1.0 + _ACOS_SNAP, -1.0, x)
    y = np.arccos(x)
    interior = np.abs(x) < 1.0 - _ACOS_SNAP
    denom = np.sqrt(np.maximum(1.0 - x * x, _ACOS_SNAP))
    return _emit(a.graph, "arccos", y, (a,),
                 lambda og: (np.where(interior, -og / denom, 0.0),))


def cos(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(a.graph, "cos", np.cos(ad), (a,),
                 lambda og: (-og * np.sin(ad),))


def clip_min(a: Tensor, lo: float) -> Tensor:
    """Elementwise max(x, lo); gradient passes only where x > lo."""
    ad = a.data
    return _emit(a.graph, "clip_min", np.maximum(ad, lo), (a,),
                 lambda og: (np.where(ad > lo, og, 0.0),))


def reduce_sum(a: Tensor, axis: int | None = None,
               keepdims: bool = False) -> Tensor:
    ad = a.data
    if axis is None:
        return _emit(a.graph, "sum", np.asarray(ad.sum()), (a,),
                     lambda og: (np.broadcast_to(og, ad.shape).copy(),))
    if not -ad.ndim <= axis < ad.ndim:
        raise GraphError(f"sum: axis {axis} out of range for shape {ad.shape}")

    def backward(og):
        if not keepdims:
            og = np.expand_dims(og, axis)
        return (np.broadcast_to(og, ad.shape).copy(),)

    return _emit(a.graph, "sum", ad.sum(axis=axis, keepdims=keepdims), (a,),
                 backward)


def reduce_max(a: Tensor) -> Tensor:
    """Maximum over all entries; the gradient routes to the first argmax."""
    ad = a.data
    if ad.size == 0:
        raise GraphError("max of an empty tensor")
    flat_idx = int(np.argmax(ad))

    def backward(og):
        full = np.zeros_like(ad)
        full.ravel()[flat_idx] = og
        return (full,)

    return _emit(a.graph, "max", np.asarray(ad.max()), (a,), backward)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    if count == 0:
        raise GraphError("mean over an empty axis")
    return reduce_sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise GraphError("concat: need at least one tensor")
    g = _same_graph("concat", *tensors)
    datas = [t.data for t in tensors]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as err:
        raise GraphError(f"concat: {err}") from err
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]
    return _emit(g, "concat", out, tuple(tensors),
                 lambda og: tuple(np.ascontiguousarray(part)
                                  for part in np.split(og, splits, axis=axis)))


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    ad = a.data
    if start < 0 or length < 0 or start + length > ad.shape[axis]:
        raise GraphError(
            f"narrow: [{start}:{start + length}) outside axis {axis} "
            f"of shape {ad.shape}")
    index = [slice(None)] * ad.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(og):
        full = np.zeros_like(ad)
        full[index] = og
        return (full,)

    return _emit(a.graph, "narrow", np.ascontiguousarray(ad[index]), (a,),
                 backward)


def row_norms(a: Tensor) -> Tensor:
    """Euclidean norm of every row of a 2-d tensor, shape (B, 1)."""
    if a.data.ndim != 2:
        raise GraphError(f"row_norms: expected 2-d, got shape {a.data.shape}")
    return sqrt(reduce_sum(mul(a, a), axis=1, keepdims=True))


def input_gradient_expression(layers, x: Tensor) -> tuple[Tensor, Tensor]:
    """Forward an MLP and emit its input gradient as graph nodes.

    ``layers`` is a sequence of ``(w, b, activation)`` with ``w`` of shape
    (fan_in, fan_out), ``b`` of shape (1, fan_out) and activation one of
    'relu' | 'tanh' | 'identity'.  Returns ``(y, grad_x)`` where grad_x
    is the gradient of ``sum(y)`` with respect to ``x``, built entirely
    from forward primitives.  Because the expression is itself part of
    the graph, a later backward differentiates it with respect to the
    weights (double backprop).
    """
    graph = x.graph
    pre_acts: list[Tensor] = []
    acts: list[str] = []
    z = x
    for w, b, activation in layers:
        a = add(matmul(z, w), b)
        pre_acts.append(a)
        acts.append(activation)
        if activation == "relu":
            z = relu(a)
        elif activation == "tanh":
            z = tanh(a)
        elif activation == "identity":
            z = a
        else:
            raise GraphError(
                f"input_gradient_expression: unsupported activation "
                f"{activation!r}")
    out = z

    batch = x.data.shape[0]
    out_width = out.data.shape[1]
    grad = graph.constant(np.ones((batch, out_width)))
    for (w, _, activation), a in zip(reversed(layers),
                                     reversed(pre_acts)):
        if activation == "relu":
            grad = mul(grad, heaviside(a))
        elif activation == "tanh":
            th = tanh(a)
            grad = mul(grad, graph.constant(1.0) - mul(th, th))
        grad = matmul(grad, transpose(w))
    return out, grad
