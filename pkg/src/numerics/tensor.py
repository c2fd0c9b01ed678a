"""
Dense float64 tensors with a recorded computation graph.

Every operation returns a new Tensor holding its value and, when any input
requires a gradient, a closure mapping the output gradient to input gradients.
`backward` walks that graph in reverse topological order and writes the
gradients of the leaves registered in a ParameterSet.
"""

from collections.abc import Callable, Sequence
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.special import expit

from src.errors import NumericError

if TYPE_CHECKING:
    from src.numerics.params import ParameterSet

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """A float64 array plus the node that produced it"""

    __slots__ = ("data", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: BackwardFn | None = None,
        op: str = "leaf",
    ):
        array = np.asarray(data, dtype=np.float64)
        if any(dim <= 0 for dim in array.shape):
            raise ValueError(f"Tensor dimensions must be positive, got shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{label})"

    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return div(self, other)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __matmul__(self, other: Any) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis: int | tuple[int, ...] | None = None) -> "Tensor":
        return mean(self, axis)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def square(self) -> "Tensor":
        return square(self)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"Non-finite values produced by '{op}'")


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
    _check_finite(data, op)
    if not any(p.requires_grad for p in parents):
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward, op=op)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), _backward, "add")


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), _backward, "sub")


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), _backward, "mul")


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0):
        raise NumericError("Division by zero in 'div'")
    out = a.data / b.data

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)

    return _node(out, (a, b), _backward, "div")


def matmul(a: Any, b: Any) -> Tensor:
    """(..., n, k) @ (k, m); the right operand is a plain matrix"""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ b.data.T
        grad_b = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return grad_a, grad_b

    return _node(a.data @ b.data, (a, b), _backward, "matmul")


def tanh(x: Any) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Any) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def square(x: Any) -> Tensor:
    x = as_tensor(x)
    return _node(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def tsum(x: Any, axis: int | tuple[int, ...] | None = None) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.asarray(out), (x,), _backward, "sum")


def mean(x: Any, axis: int | tuple[int, ...] | None = None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis) / float(count)


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.reshape(tuple(shape)), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Any) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.T, (x,), lambda g: (g.T,), "transpose")


def getitem(x: Any, index: Any) -> Tensor:
    x = as_tensor(x)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _node(np.array(x.data[index]), (x,), _backward, "getitem")


def concat(tensors: Sequence[Any], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    return _node(np.concatenate([p.data for p in parts], axis=axis), parts, _backward, "concat")


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: "ParameterSet") -> None:
    """
    Reverse-mode pass from a scalar loss into the gradients of `params`.

    Gradients must be zeroed (ParameterSet.zero_grad) before every call;
    parameters not reached by the graph get a zero gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if params.has_gradients:
        raise RuntimeError("Gradients were not zeroed before backward")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaf_grads: dict[int, np.ndarray] = {}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            leaf_grads[id(node)] = grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad), strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    for name, tensor in params.items():
        grad = leaf_grads.get(id(tensor))
        if grad is None:
            continue
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"Non-finite gradient for parameter '{name}'")
        params.grads[name] += grad.reshape(tensor.shape)
    params.has_gradients = True
