"""Parameter containers built on the functional primitives."""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import functional as F
from .core import DEFAULT_DTYPE, DiffTensor


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> DiffTensor:
    bound = math.sqrt(1.0 / fan_in)
    return DiffTensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


class Module:
    """Minimal module tree: parameters and buffers are discovered by attribute walk.

    Buffers are plain numpy arrays whose attribute names are listed in
    ``_buffer_names``.
    """

    _buffer_names: Tuple[str, ...] = ()
    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, DiffTensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, DiffTensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name in self._buffer_names:
            yield f"{prefix}{name}", getattr(self, name)
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def parameters(self) -> List[DiffTensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        """Set every parameter gradient to zeros (also marks non-participants)."""
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.values.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: stored shape {value.shape} != parameter shape {p.shape}")
            p.values[...] = value
        for name, b in buffers.items():
            b[...] = state[name]


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel, stride=1, padding=0,
                 rng: Optional[np.random.Generator] = None, dtype=DEFAULT_DTYPE):
        rng = rng or np.random.default_rng()
        self.out_channels = out_channels
        self.kernel = F._pair(kernel)
        self.stride = F._pair(stride)
        self.padding = F._pair(padding)
        if min(self.stride) < 1 or min(self.padding) < 0:
            raise ValueError(f"invalid stride {self.stride} or padding {self.padding}")
        fan_in = in_channels * self.kernel[0] * self.kernel[1]
        self.weights = _uniform(rng, (out_channels, in_channels) + self.kernel, fan_in, dtype)
        self.bias = _uniform(rng, (out_channels,), fan_in, dtype)

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return F.conv2d(x, self.weights, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, epsilon: float = 1e-5, dtype=DEFAULT_DTYPE):
        if not 0 < momentum < 1 or epsilon <= 0:
            raise ValueError("batch norm needs momentum in (0, 1) and positive epsilon")
        self.scale = DiffTensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.shift = DiffTensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.epsilon = epsilon

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return F.batch_norm(x, self.scale, self.shift, self.running_mean, self.running_var,
                            self.training, self.momentum, self.epsilon)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None, dtype=DEFAULT_DTYPE):
        rng = rng or np.random.default_rng()
        self.weights = _uniform(rng, (in_features, out_features), in_features, dtype)
        self.bias = _uniform(rng, (out_features,), in_features, dtype)

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return F.linear(x, self.weights, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, epsilon: float = 1e-5, dtype=DEFAULT_DTYPE):
        self.scale = DiffTensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.shift = DiffTensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.epsilon = epsilon

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return F.layer_norm(x, self.scale, self.shift, self.epsilon)


class Dropout(Module):
    """Dropout layer drawing masks from a shared generator owned by the model."""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def __call__(self, x: DiffTensor) -> DiffTensor:
        return F.dropout(x, self.rate, self.training, self.rng)
