"""
Named trainable parameters with their gradients and optimizer state
"""

from collections.abc import Iterator

import numpy as np

from src.numerics.tensor import Tensor


def xavier_init(fan_in: int, fan_out: int, seed: int) -> Tensor:
    """Uniform Xavier draw of a (fan_out × fan_in) weight matrix"""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)))


class ParameterSet:
    """
    Ordered collection of parameter tensors.

    Each parameter owns a gradient buffer of the same shape. `step` counts
    optimizer updates; `state` holds per-parameter optimizer moments.
    """

    def __init__(self) -> None:
        self.params: dict[str, Tensor] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, dict[str, np.ndarray]] = {}
        self.step = 0
        self.has_gradients = False

    def add(self, name: str, value: np.ndarray | Tensor) -> Tensor:
        if name in self.params:
            raise ValueError(f"Duplicate parameter name '{name}'")
        data = value.data if isinstance(value, Tensor) else value
        tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = tensor
        self.grads[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: object) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0.0)
        self.has_gradients = False

    def num_values(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, value in snapshot.items():
            self.params[name].data[...] = value
