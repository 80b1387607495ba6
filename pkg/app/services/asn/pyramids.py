# services/asn/pyramids.py
"""
Asymmetric pyramid modules.

Shapes use a leading batch axis. Branch-weight vectors are [N, L] with rows
on the simplex; the per-image sequence weights v are indexed j * N_c + i
(rate j, channel parameter i).
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.schemas.model_config import ModelConfig
from app.services.tensor import ops
from app.services.tensor.nn import MLP, Conv2d, ConvBlock, GroupNorm, Module, ModuleList, activation
from app.services.tensor.tensor import Tensor

SpatialKey = Tuple[int, int]
PairKey = Tuple[int, int, int]


def column(weights: Tensor, index: int) -> Tensor:
    """Entry `index` of each row of an [N, L] weight tensor, as an [N] tensor."""
    return ops.reshape(ops.take(weights, axis=1, start=index), (weights.shape[0],))


def weighted(x: Tensor, weights: Tensor, index: int) -> Tensor:
    return ops.mul_per_sample(x, column(weights, index))


@dataclass
class BranchWeights:
    v1: Tensor
    v2: Tensor
    w1: Tensor
    w2: Tensor
    wc: Tensor

    def vectors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name).data for name in ("v1", "v2", "w1", "w2", "wc")}


class BranchWeightGenerator(Module):
    """global pooling -> two-layer perceptron -> softmax"""

    def __init__(self, rng: np.random.Generator, in_channels: int, hidden: int, out_features: int, act: str):
        super().__init__()
        self.mlp = MLP(rng, in_channels, hidden, out_features, act)

    def forward(self, shallow: Tensor) -> Tensor:
        pooled = ops.reshape(ops.global_avg_pool(shallow), shallow.shape[:2])
        return ops.softmax(self.mlp(pooled), axis=1)


class SqueezeGate(Module):
    """
    concat -> 1x1 projection -> norm -> act -> resize to the skip extent
    -> kxk conv -> norm -> + skip -> act

    The skip is projected by a 1x1 convolution when its width differs.
    """

    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, skip_channels: int,
                 config: ModelConfig):
        super().__init__()
        self.project = ConvBlock(rng, in_channels, out_channels, kernel_size=1,
                                 norm_groups=config.norm_groups, act=config.activation)
        self.conv = Conv2d(rng, out_channels, out_channels, config.kernel_size)
        self.norm = GroupNorm(out_channels, config.norm_groups)
        self.skip = None
        if skip_channels != out_channels:
            self.skip = Conv2d(rng, skip_channels, out_channels, kernel_size=1)
        self.act = activation(config.activation)

    def forward(self, parts: Sequence[Tensor], skip: Tensor) -> Tensor:
        x = self.project(ops.concat(list(parts), axis=1))
        x = ops.bilinear_resize(x, skip.shape[2], skip.shape[3])
        x = self.norm(self.conv(x))
        shortcut = skip if self.skip is None else self.skip(skip)
        return self.act(ops.add(x, shortcut))


class PyramidLevel(Module):
    """One (rate j, multiplier k) cell of the spatial pyramid: N_c dilated convolutions and a gate."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig, in_channels: int, rate: int, multiplier: int):
        super().__init__()
        dilation = config.dilation(rate)
        self.convs = ModuleList([
            Conv2d(rng, in_channels, param * multiplier, config.kernel_size, dilation=dilation)
            for param in config.channel_params
        ])
        width = sum(param * multiplier for param in config.channel_params)
        self.gate = SqueezeGate(rng, width + in_channels, multiplier, in_channels, config)

    def forward(self, features: Tensor, v: Tensor, offset: int) -> Tensor:
        outputs = [weighted(conv(features), v, offset + i) for i, conv in enumerate(self.convs)]
        return self.gate(outputs + [features], skip=features)


class SpatialPyramid(Module):
    """aSP: one PyramidLevel per (j, k), shared by both dates."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig, in_channels: int):
        super().__init__()
        self.config = config
        self.levels = ModuleList([
            PyramidLevel(rng, config, in_channels, rate, multiplier)
            for rate in config.spatial_rates for multiplier in config.multipliers
        ])

    def forward(self, features: Tensor, v: Tensor) -> Dict[SpatialKey, Tensor]:
        n_r, n_c = self.config.n_r, self.config.n_c
        return {
            (j, k): self.levels[j * n_r + k](features, v, j * n_c)
            for j in range(self.config.n_d) for k in range(n_r)
        }


class GlobalBranch(Module):
    """global average pool -> 1x1 conv -> act -> broadcast to the input extent"""

    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, act: str):
        super().__init__()
        self.conv = Conv2d(rng, in_channels, out_channels, kernel_size=1)
        self.act = activation(act)

    def forward(self, features: Tensor) -> Tensor:
        pooled = self.act(self.conv(ops.global_avg_pool(features)))
        return ops.bilinear_resize(pooled, features.shape[2], features.shape[3])


class PyramidFusion(Module):
    """
    Gate h_k (semantic) or its change-branch counterpart: the N_d pyramid maps
    and the global map at multiplier k, each scaled by w_k, are squeezed onto
    the shallow skip.
    """

    def __init__(self, rng: np.random.Generator, config: ModelConfig, deep_channels: int, skip_channels: int):
        super().__init__()
        self.config = config
        self.globals = ModuleList([
            GlobalBranch(rng, deep_channels, multiplier, config.activation) for multiplier in config.multipliers
        ])
        self.gates = ModuleList([
            SqueezeGate(rng, (config.n_d + 1) * multiplier, multiplier, skip_channels, config)
            for multiplier in config.multipliers
        ])

    def forward(self, pyramid: Dict[SpatialKey, Tensor], deep: Tensor, shallow: Tensor, w: Tensor) -> List[Tensor]:
        fused = []
        for k in range(self.config.n_r):
            maps = [pyramid[(j, k)] for j in range(self.config.n_d)] + [self.globals[k](deep)]
            fused.append(self.gates[k]([weighted(m, w, k) for m in maps], skip=shallow))
        return fused


class RepresentationPyramid(Module):
    """
    aRP. The change branch builds its own dilated pyramid on F^c, fuses it per
    multiplier k onto the shallow change skip (scaled by w^c_k), then
    integrates each date's spatial pyramid at k into a pair_width map M^(t)_k
    with a projection shared by both dates.
    """

    def __init__(self, rng: np.random.Generator, config: ModelConfig, change_channels: int, skip_channels: int):
        super().__init__()
        self.config = config
        self.cells = ModuleList([
            ConvBlock(rng, change_channels, multiplier, config.kernel_size, dilation=config.dilation(rate),
                      norm_groups=config.norm_groups, act=config.activation)
            for rate in config.spatial_rates for multiplier in config.multipliers
        ])
        self.fusion = PyramidFusion(rng, config, change_channels, skip_channels)
        self.integrate = ModuleList([
            ConvBlock(rng, (config.n_d + 1) * multiplier, config.pair_width, kernel_size=1,
                      norm_groups=config.norm_groups, act=config.activation)
            for multiplier in config.multipliers
        ])

    def change_pyramid(self, change: Tensor, change_shallow: Tensor, wc: Tensor) -> List[Tensor]:
        n_r = self.config.n_r
        pyramid = {(j, k): self.cells[j * n_r + k](change) for j in range(self.config.n_d) for k in range(n_r)}
        return self.fusion(pyramid, change, change_shallow, wc)

    def integrate_date(self, change_levels: List[Tensor], pyramid: Dict[SpatialKey, Tensor]) -> List[Tensor]:
        levels = []
        for k, change_level in enumerate(change_levels):
            height, width = change_level.shape[2:]
            spatial = [ops.bilinear_resize(pyramid[(j, k)], height, width) for j in range(self.config.n_d)]
            levels.append(self.integrate[k](ops.concat([change_level] + spatial, axis=1)))
        return levels


def spatial_pairs(pyramid1: Dict[SpatialKey, Tensor], pyramid2: Dict[SpatialKey, Tensor], w1: Tensor, w2: Tensor,
                  config: ModelConfig) -> Dict[PairKey, Tensor]:
    """M_{j1,j2,k} = w1_k * F1_{j1,k} - w2_k * F2_{j2,k}"""
    pairs = {}
    for k in range(config.n_r):
        for j1 in range(config.n_d):
            for j2 in range(config.n_d):
                if j1 != j2 and not config.asymmetric_pairs:
                    continue
                pairs[(j1, j2, k)] = ops.sub(weighted(pyramid1[(j1, k)], w1, k), weighted(pyramid2[(j2, k)], w2, k))
    return pairs


def representation_pairs(levels1: List[Tensor], levels2: List[Tensor], config: ModelConfig) -> Dict[SpatialKey, Tensor]:
    """M^c_{k1,k2} = M^(1)_{k1} - M^(2)_{k2}"""
    return {
        (k1, k2): ops.sub(levels1[k1], levels2[k2])
        for k1 in range(config.n_r) for k2 in range(config.n_r)
        if k1 == k2 or config.asymmetric_pairs
    }
