"""Linear layers and small MLPs on top of the autodiff engine.

Initialization follows the self-normalizing-network convention: LeCun normal
(std = 1/sqrt(fan_in)) for layers feeding a SELU, scaled uniform for plain
linear output layers.  Biases start at zero.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor

__all__ = ["Linear", "MLP", "lecun_normal", "scaled_uniform"]


def lecun_normal(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)


def scaled_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, init: str = "lecun_normal"):
        if init == "lecun_normal":
            w = lecun_normal(rng, in_dim, (in_dim, out_dim))
        elif init == "scaled_uniform":
            w = scaled_uniform(rng, in_dim, (in_dim, out_dim))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return as_tensor(x) @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class MLP:
    """Stack of linear layers with SELU between them.

    ``activate_final`` adds a SELU after the last layer as well; otherwise the
    last layer is a plain linear read-out (and gets the uniform init).
    """

    def __init__(self, dims: list[int], rng: np.random.Generator, activate_final: bool = False):
        if len(dims) < 2:
            raise ValueError("need at least an input and an output dimension")
        self.activate_final = activate_final
        self.layers = []
        for i in range(len(dims) - 1):
            last = i == len(dims) - 2
            init = "lecun_normal" if (not last or activate_final) else "scaled_uniform"
            self.layers.append(Linear(dims[i], dims[i + 1], rng, init=init))

    def __call__(self, x: Tensor) -> Tensor:
        h = as_tensor(x)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1 or self.activate_final:
                h = h.selu()
        return h

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]
