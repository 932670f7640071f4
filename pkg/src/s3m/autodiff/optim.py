"""Trainable parameter store and the Adam optimizer."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import ShapeError, Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ParamStore:
    """Named trainable tensors plus Adam moment buffers and a shared step counter."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"Parameter {name!r} already registered")
        tensor = Tensor(value, requires_grad=True, name=name)
        self._params[name] = tensor
        self._m[name] = np.zeros_like(tensor.value)
        self._v[name] = np.zeros_like(tensor.value)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self._m[name], self._v[name]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def reset_optimizer(self) -> None:
        for name in self._params:
            self._m[name].fill(0.0)
            self._v[name].fill(0.0)
        self.step = 0

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for name, p in self._params.items():
            new = np.asarray(values[name], dtype=np.float64)
            if new.shape != p.shape:
                raise ShapeError(
                    f"restore {name}: shape {new.shape} does not match {p.shape}"
                )
            p.value[...] = new

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self._params.values())))

    def clip_grad_norm(self, max_norm: float) -> float:
        """Rescale all grads so their global L2 norm is at most max_norm."""
        norm = self.grad_norm()
        if norm > max_norm > 0:
            factor = max_norm / norm
            for p in self._params.values():
                p.grad *= factor
        return norm


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> None:
    """Bias-corrected Adam update of every parameter, then zero the grads."""
    store.step += 1
    bc1 = 1.0 - beta1**store.step
    bc2 = 1.0 - beta2**store.step

    for name, p in store.items():
        g = p.grad
        m, v = store.moments(name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.zero_grad()
