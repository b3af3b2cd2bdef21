"""Parameter containers, layers and the Adam optimizer on top of :mod:`kgnn.autograd`."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(3.0 / max(fan_in, 1))  # unit-variance weights, activation scale survives depth
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Anything holding parameters; names are dotted attribute paths."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(name + "."))
            elif isinstance(value, (list, tuple)) and value and isinstance(value[0], Module):
                for i, sub in enumerate(value):
                    out.update(sub.named_parameters(f"{name}{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        own = self.named_parameters()
        missing = sorted(set(own) - set(arrays))
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {missing[:5]}")
        for name, tensor in own.items():
            if arrays[name].shape != tensor.shape:
                raise ValueError(
                    f"parameter {name}: checkpoint shape {arrays[name].shape} != model shape {tensor.shape}"
                )
            tensor.data = np.array(arrays[name], dtype=np.float64)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.weight = parameter(uniform(rng, (in_dim, out_dim), in_dim))
        self.bias = parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ag.matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


class Adam:
    """Adaptive-moment optimizer with global-norm gradient clipping."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: float | None = 5.0,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.steps = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((p.grad**2).sum()) for p in self.params if p.grad is not None)))

    def step(self) -> float:
        norm = self.grad_norm()
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.steps += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.steps
        c2 = 1.0 - b2**self.steps
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad * scale
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def iter_batches(n: int, batch_size: int, rng: np.random.Generator | None = None) -> Iterator[np.ndarray]:
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]
