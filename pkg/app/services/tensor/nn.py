# services/tensor/nn.py
"""Parameters, modules and the layers the network is assembled from."""
import math
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.constants import NORM_EPS
from app.exceptions.custom_exceptions import ConfigError, DimensionError
from app.services.tensor import ops
from app.services.tensor.tensor import Tensor


class Parameter(Tensor):
    """Learnable leaf tensor with a hierarchical name and an SGD momentum buffer."""

    def __init__(self, data: np.ndarray, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.momentum_buffer = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


class Module:
    """
    Container that discovers parameters and sub-modules from its attributes.

    Parameter names are the dotted attribute paths, e.g.
    `encoder.stages.0.conv.weight`.
    """

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._parameters[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        seen = set()
        for name, param in self._walk(prefix):
            if id(param) in seen:
                continue
            seen.add(id(param))
            yield name, param

    def _walk(self, prefix: str) -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for name, module in self._modules.items():
            yield from module._walk(f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def assign_names(self) -> None:
        """Stamp each parameter with its canonical dotted name."""
        for name, param in self.named_parameters():
            param.name = name

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, param.data.copy()) for name, param in sorted(self.named_parameters()))

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ConfigError("state does not match model parameters",
                              data={"missing": missing[:10], "unexpected": unexpected[:10]})
        for name, param in own.items():
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != param.shape:
                raise DimensionError(f"parameter {name} expects {param.shape}, got {array.shape}")
            param.data = array.copy()

    def set_trainable(self, trainable: bool) -> None:
        """Frozen parameters drop out of the record and the optimizer."""
        for param in self.parameters():
            param.requires_grad = trainable


class ModuleList(Module):
    def __init__(self, modules: Sequence[Module] = ()):
        super().__init__()
        self._items: List[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


def fan_in_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


class Conv2d(Module):
    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, kernel_size: int = 3,
                 stride: int = 1, dilation: int = 1, padding: Optional[int] = None, zero_init: bool = False):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(np.zeros(shape) if zero_init else fan_in_normal(rng, shape, fan_in))
        self.bias = Parameter(np.zeros(out_channels))
        self.stride, self.dilation = stride, dilation
        self.padding = dilation * (kernel_size - 1) // 2 if padding is None else padding
        self.out_channels = out_channels

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, in_features: int, out_features: int):
        super().__init__()
        self.weight = Parameter(fan_in_normal(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int, eps: float = NORM_EPS):
        super().__init__()
        self.groups = math.gcd(channels, groups)
        self.eps = eps
        self.gain = Parameter(np.ones(channels))
        self.shift = Parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        return ops.normalize_features(x, self.groups, self.gain, self.shift, self.eps)


ACTIVATIONS = {"relu": ops.relu, "softplus": ops.softplus}


def activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown activation '{name}'")


class ConvBlock(Module):
    """conv -> group norm -> activation"""

    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, kernel_size: int = 3,
                 stride: int = 1, dilation: int = 1, norm_groups: int = 4, act: str = "relu"):
        super().__init__()
        self.conv = Conv2d(rng, in_channels, out_channels, kernel_size, stride=stride, dilation=dilation)
        self.norm = GroupNorm(out_channels, norm_groups)
        self.act = activation(act)

    def forward(self, x: Tensor) -> Tensor:
        return self.act(self.norm(self.conv(x)))


class MLP(Module):
    """Two-layer perceptron over pooled feature vectors."""

    def __init__(self, rng: np.random.Generator, in_features: int, hidden: int, out_features: int,
                 act: str = "relu"):
        super().__init__()
        self.hidden = Linear(rng, in_features, hidden)
        self.out = Linear(rng, hidden, out_features)
        self.act = activation(act)

    def forward(self, x: Tensor) -> Tensor:
        return self.out(self.act(self.hidden(x)))
