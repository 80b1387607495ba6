# services/tensor/optim.py
from typing import Iterable, List

import numpy as np

from app.schemas.model_config import OptimizerConfig
from app.services.tensor.nn import Parameter


def poly_lr(config: OptimizerConfig, step: int) -> float:
    """base_lr * (1 - step / total_steps) ** poly_power, clamped at 0 past the end."""
    remaining = max(0.0, 1.0 - step / config.total_steps)
    return config.base_lr * remaining ** config.poly_power


class SGD:
    """
    Momentum SGD with weight decay folded into the velocity:
        v <- m * v + g + wd * theta
        theta <- theta - lr * v
    Parameters with requires_grad False are left untouched.
    """

    def __init__(self, params: Iterable[Parameter], config: OptimizerConfig):
        self.params: List[Parameter] = list(params)
        self.config = config

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self, step: int) -> float:
        lr = poly_lr(self.config, step)
        momentum, decay = self.config.momentum, self.config.weight_decay
        for param in self.params:
            if not param.requires_grad or param.grad is None:
                continue
            velocity = momentum * param.momentum_buffer + param.grad + decay * param.data
            param.momentum_buffer = velocity
            param.data = param.data - lr * velocity
        return lr


def sgd_step(params: Iterable[Parameter], config: OptimizerConfig, step: int) -> float:
    return SGD(params, config).step(step)


def reset_momentum(params: Iterable[Parameter]) -> None:
    for param in params:
        param.momentum_buffer = np.zeros_like(param.data)
