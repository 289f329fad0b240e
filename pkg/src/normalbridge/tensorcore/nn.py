"""Small layer zoo on top of the autodiff core.

Layers own named parameter tensors; models assemble them and expose a
flat ``named_parameters`` dict with stable, checkpoint-friendly names.
"""

from __future__ import annotations

import numpy as np

from .rng import SeededRng
from .tensor import Tensor, concat, conv2d, upsample_nearest

__all__ = ["Conv2d", "Linear", "GroupNorm", "group_norm", "collect_params", "l2_normalize"]


class Conv2d:
    """3x3-style convolution layer; He-normal init scaled by ``init_scale``."""

    def __init__(self, c_in: int, c_out: int, k: int = 3, stride: int = 1,
                 padding: int | None = None, rng: SeededRng | None = None,
                 bias: bool = True, init_scale: float = 1.0):
        if padding is None:
            padding = k // 2
        self.stride = stride
        self.padding = padding
        rng = rng or SeededRng(0)
        std = init_scale * np.sqrt(2.0 / (c_in * k * k))
        self.weight = Tensor(rng.normal((c_out, c_in, k, k), scale=std), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def params(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.weight": self.weight}
        if self.bias is not None:
            out[f"{prefix}.bias"] = self.bias
        return out


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: SeededRng | None = None,
                 bias: bool = True, init_scale: float = 1.0):
        rng = rng or SeededRng(0)
        std = init_scale * np.sqrt(2.0 / d_in)
        self.weight = Tensor(rng.normal((d_in, d_out), scale=std), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out

    def params(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.weight": self.weight}
        if self.bias is not None:
            out[f"{prefix}.bias"] = self.bias
        return out


def group_norm(x: Tensor, num_groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Group normalization over [N,C,H,W], composed from primitives."""
    n, c, h, w = x.shape
    if c % num_groups:
        raise ValueError(f"channels {c} not divisible by {num_groups} groups")
    g = x.reshape(n, num_groups, (c // num_groups) * h * w)
    mu = g.mean(axis=2, keepdims=True)
    centered = g - mu
    var = (centered * centered).mean(axis=2, keepdims=True)
    normed = centered / (var + eps).sqrt()
    normed = normed.reshape(n, c, h, w)
    return normed * gamma.reshape(1, c, 1, 1) + beta.reshape(1, c, 1, 1)


class GroupNorm:
    def __init__(self, num_channels: int, num_groups: int = 4, eps: float = 1e-5):
        self.num_groups = num_groups
        self.eps = eps
        self.gamma = Tensor(np.ones(num_channels), requires_grad=True)
        self.beta = Tensor(np.zeros(num_channels), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return group_norm(x, self.num_groups, self.gamma, self.beta, self.eps)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


def collect_params(layers: dict[str, object]) -> dict[str, Tensor]:
    """Flatten ``{name: layer}`` into ``{dotted.name: Tensor}``, order-stable."""
    out: dict[str, Tensor] = {}
    for name, layer in layers.items():
        if isinstance(layer, Tensor):
            out[name] = layer
        else:
            out.update(layer.params(name))
    return out


def l2_normalize(x: Tensor, axis: int, eps: float = 1e-12) -> Tensor:
    """Unit-normalize along ``axis`` (safe at zero via ``eps``)."""
    sq = (x * x).sum(axis=axis, keepdims=True)
    return x / (sq + eps).sqrt()
