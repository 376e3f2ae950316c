"""Reverse-mode automatic differentiation over dense float64 arrays.

Small graph-based engine in the micrograd style, but each node holds a
numpy array instead of a scalar.  Enough machinery to train the little
fully-connected networks used elsewhere in the package.

Conventions:
  * everything is float64; inputs are coerced on construction
  * shapes must match exactly -- there is no implicit broadcasting.
    The only broadcast-like primitives are `add_bias` (row vector over a
    batch) and `scale` (multiplication by a python float), both explicit.
  * `backward()` accumulates into `.grad`; callers zero gradients
    explicitly (see `zero_grads`), which is what the training loops rely
    on for mini-batch accumulation.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Node",
    "ShapeError",
    "NonFiniteError",
    "constant",
    "parameter",
    "add",
    "sub",
    "neg",
    "mul",
    "scale",
    "add_bias",
    "matmul",
    "gelu",
    "sum_all",
    "mean_all",
    "mse",
    "reshape",
    "slice_node",
    "backward",
    "zero_grads",
    "make_rng",
]

# tanh-approximation GELU constants
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(FloatingPointError):
    """A public operation produced NaN or Inf."""


def _as_f64(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("non-finite values in tensor")
    return arr


class Node:
    """One vertex of the computation graph.

    `value` is a float64 array, `grad` is lazily allocated with the same
    shape.  `_parents` pairs each upstream node with a local backward rule
    mapping this node's output gradient to a contribution on the parent.
    """

    __slots__ = ("value", "grad", "_parents", "requires_grad")

    def __init__(self, value, parents=(), requires_grad=True):
        self.value = _as_f64(value)
        self.grad = None
        self._parents = tuple(parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar (same-shape semantics, no broadcasting)
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


def constant(value) -> Node:
    """Leaf that never receives a gradient."""
    return Node(value, requires_grad=False)


def parameter(value) -> Node:
    """Trainable leaf."""
    return Node(value)


def _check_same_shape(a: Node, b: Node, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


def add(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "add")
    return Node(a.value + b.value, [(a, lambda g: g), (b, lambda g: g)])


def sub(a: Node, b: Node) -> Node:
    _check_same_shape(a, b, "sub")
    return Node(a.value - b.value, [(a, lambda g: g), (b, lambda g: -g)])


def neg(a: Node) -> Node:
    return Node(-a.value, [(a, lambda g: -g)])


def mul(a: Node, b: Node) -> Node:
    """Elementwise (Hadamard) product."""
    _check_same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return Node(av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)])


def scale(a: Node, k: float) -> Node:
    """Multiplication by a python scalar (the one sanctioned broadcast)."""
    k = float(k)
    return Node(a.value * k, [(a, lambda g: g * k)])


def add_bias(x: Node, b: Node) -> Node:
    """Add a rank-1 bias to every row of a (batch, n) matrix."""
    if x.value.ndim != 2 or b.value.ndim != 1 or x.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"add_bias: expected (batch, n) + (n,), got {x.value.shape} + {b.value.shape}"
        )
    return Node(x.value + b.value, [(x, lambda g: g), (b, lambda g: g.sum(axis=0))])


def matmul(a: Node, b: Node) -> Node:
    """Row-major matrix product of 2-D operands."""
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError("matmul: operands must be rank 2")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"matmul: inner dims {a.value.shape} x {b.value.shape} do not match"
        )
    av, bv = a.value, b.value
    return Node(
        av @ bv,
        [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)],
    )


def gelu(a: Node) -> Node:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = a.value
    inner = _GELU_C * (x + _GELU_A * x**3)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)
    # d/dx = 0.5*(1+tanh) + 0.5*x*(1-tanh^2)*c*(1+3*0.044715*x^2)
    dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
    local = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * dinner
    return Node(out, [(a, lambda g: g * local)])


def sum_all(a: Node) -> Node:
    shape = a.value.shape
    return Node(a.value.sum(), [(a, lambda g: np.full(shape, float(g)))])


def mean_all(a: Node) -> Node:
    n = a.value.size
    shape = a.value.shape
    return Node(a.value.mean(), [(a, lambda g: np.full(shape, float(g) / n))])


def mse(a: Node, b: Node) -> Node:
    """Mean of squared differences."""
    _check_same_shape(a, b, "mse")
    d = sub(a, b)
    return mean_all(mul(d, d))


def reshape(a: Node, shape) -> Node:
    old = a.value.shape
    return Node(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def slice_node(a: Node, key) -> Node:
    """Basic (slice-only) indexing; backward scatters into zeros."""
    shape = a.value.shape

    def back(g):
        out = np.zeros(shape)
        out[key] = g
        return out

    return Node(a.value[key], [(a, back)])


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(output: Node) -> None:
    """Backpropagate from a scalar output, accumulating into `.grad`.

    Repeated calls without zeroing add their contributions, which the
    training loops exploit for gradient accumulation.
    """
    if output.value.size != 1:
        raise ShapeError(f"backward: output must be scalar, got shape {output.value.shape}")
    order = _topo_order(output)
    output._accumulate(np.ones_like(output.value))
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, rule in node._parents:
            if not parent.requires_grad and not parent._parents:
                continue  # constant leaf, gradient never read
            parent._accumulate(np.asarray(rule(g), dtype=np.float64))


def zero_grads(nodes) -> None:
    for n in nodes:
        n.zero_grad()


def make_rng(seed: int) -> np.random.Generator:
    """Seedable, portable generator (PCG64): same seed, same stream everywhere."""
    return np.random.Generator(np.random.PCG64(int(seed)))
