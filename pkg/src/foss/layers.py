"""Small parameterized building blocks shared by the branches and the decoder."""
from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor


def init_weight(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(max(fan_in, 1)), size=shape).astype(dtype)


class Linear:
    """y = x @ W + b over the last axis."""

    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.w = Parameter(f"{name}.w", init_weight(rng, d_in, (d_in, d_out), dtype))
        self.b = Parameter(f"{name}.b", np.zeros(d_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return tt.matmul(x, self.w) + self.b

    def params(self) -> list[Parameter]:
        return [self.w, self.b]


class MLP:
    """Two-layer perceptron with SiLU hidden activation."""

    def __init__(self, name: str, d_in: int, d_hidden: int, d_out: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.fc1 = Linear(f"{name}.fc1", d_in, d_hidden, rng, dtype)
        self.fc2 = Linear(f"{name}.fc2", d_hidden, d_out, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(tt.silu(self.fc1(x)))

    def params(self) -> list[Parameter]:
        return self.fc1.params() + self.fc2.params()


class LayerNorm:
    """Learnable scale/shift layer normalization over the last axis."""

    def __init__(self, name: str, d: int, dtype=np.float64, eps: float = 1e-5):
        self.gamma = Parameter(f"{name}.gamma", np.ones(d, dtype=dtype))
        self.beta = Parameter(f"{name}.beta", np.zeros(d, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return tt.layer_norm(x, self.gamma, self.beta, self.eps)

    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]


class CrossAttention:
    """Single-head scaled dot-product attention with learned projections."""

    def __init__(self, name: str, d_model: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.wq = Parameter(f"{name}.wq", init_weight(rng, d_model, (d_model, d_model), dtype))
        self.wk = Parameter(f"{name}.wk", init_weight(rng, d_model, (d_model, d_model), dtype))
        self.wv = Parameter(f"{name}.wv", init_weight(rng, d_model, (d_model, d_model), dtype))
        self.scale = 1.0 / np.sqrt(d_model)

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        q = tt.matmul(queries, self.wq)
        k = tt.matmul(keys_values, self.wk)
        v = tt.matmul(keys_values, self.wv)
        scores = tt.matmul(q, tt.swapaxes(k, -1, -2)) * self.scale
        return tt.matmul(tt.softmax(scores, axis=-1), v)

    def params(self) -> list[Parameter]:
        return [self.wq, self.wk, self.wv]
