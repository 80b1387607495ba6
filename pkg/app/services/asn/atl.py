# services/asn/atl.py
"""
Adaptive threshold learning: residual corrections on the raw logits.

    M^_t = M_t + gamma * psi1(M_t)                  (psi1 shared by both dates)
    C^   = softmax(C + gamma * psi2(M^_1 ++ M^_2))
"""
from dataclasses import dataclass

import numpy as np

from app.services.tensor import ops
from app.services.tensor.nn import Conv2d, Module, activation
from app.services.tensor.tensor import Tensor


class ATLHead(Module):
    """Two-layer convolution series, last layer zero-initialised."""

    def __init__(self, rng: np.random.Generator, in_channels: int, hidden: int, out_channels: int, act: str):
        super().__init__()
        self.first = Conv2d(rng, in_channels, hidden, kernel_size=3)
        self.second = Conv2d(rng, hidden, out_channels, kernel_size=3, zero_init=True)
        self.act = activation(act)

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.act(self.first(x)))


@dataclass
class ATLOutputs:
    m1_raw: Tensor
    m2_raw: Tensor
    c_raw: Tensor
    c_prob: Tensor


def atl_forward(m1_raw: Tensor, m2_raw: Tensor, c_raw: Tensor, gamma: float,
                psi1: ATLHead, psi2: ATLHead) -> ATLOutputs:
    m1_hat = ops.add(m1_raw, ops.scale(psi1(m1_raw), gamma))
    m2_hat = ops.add(m2_raw, ops.scale(psi1(m2_raw), gamma))
    c_hat = ops.add(c_raw, ops.scale(psi2(ops.concat([m1_hat, m2_hat], axis=1)), gamma))
    return ATLOutputs(m1_hat, m2_hat, c_hat, ops.softmax(c_hat, axis=1))
