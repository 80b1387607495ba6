# services/asn/model.py
"""
The asymmetric siamese network.

    I1, I2 --shared encoder--> F^(t)_s (stage 1), F^(t) (last stage)
    concat(I1, I2) --change encoder, stage outputs summed with both siamese stages--> F^c_s, F^c
    F^(t) --aSP--> F^(t)_{j,k} --fusion h_k--> F^(t)_k --shared decoder--> M^raw_t
    F^(t)_{j,k} pairs --> M_{j1,j2,k}
    F^c --aRP--> M^(t)_k pairs --> M^c_{k1,k2}
    trunk(F^c, F^c_s) + all pair maps --change decoder--> C^raw

Every head is upsampled bilinearly to the input extent.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from logzero import logger

from app.exceptions.custom_exceptions import DimensionError, GeometryError
from app.schemas.model_config import ModelConfig
from app.services.asn.atl import ATLHead
from app.services.asn.pyramids import (
    BranchWeightGenerator, BranchWeights, PairKey, PyramidFusion, RepresentationPyramid, SpatialKey,
    SpatialPyramid, representation_pairs, spatial_pairs,
)
from app.services.tensor import ops
from app.services.tensor.nn import Conv2d, ConvBlock, Module, ModuleList
from app.services.tensor.tensor import Tensor

ImageInput = Union[Tensor, np.ndarray]


@dataclass
class ForwardOutputs:
    m1_raw: Tensor
    m2_raw: Tensor
    c_raw: Tensor
    weights: Optional[BranchWeights] = None
    spatial1: Dict[SpatialKey, Tensor] = field(default_factory=dict)
    spatial2: Dict[SpatialKey, Tensor] = field(default_factory=dict)
    repr1: List[Tensor] = field(default_factory=list)
    repr2: List[Tensor] = field(default_factory=list)
    pair_maps_spatial: Dict[PairKey, Tensor] = field(default_factory=dict)
    pair_maps_repr: Dict[Tuple[int, int], Tensor] = field(default_factory=dict)


class Encoder(Module):
    """Stride-2 conv blocks; returns every stage output."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig, in_channels: int):
        super().__init__()
        stages, width_in = [], in_channels
        for width in config.encoder_widths:
            stages.append(ConvBlock(rng, width_in, width, config.kernel_size, stride=2,
                                    norm_groups=config.norm_groups, act=config.activation))
            width_in = width
        self.stages = ModuleList(stages)

    def forward(self, x: Tensor) -> List[Tensor]:
        outputs = []
        for stage in self.stages:
            x = stage(x)
            outputs.append(x)
        return outputs


class ChangeEncoder(Encoder):
    """Consumes concat(I1, I2); each stage output is summed with the matching siamese stage outputs."""

    def forward(self, x: Tensor, stages1: List[Tensor], stages2: List[Tensor]) -> List[Tensor]:
        outputs = []
        for stage, f1, f2 in zip(self.stages, stages1, stages2):
            x = ops.add(ops.add(stage(x), f1), f2)
            outputs.append(x)
        return outputs


class Decoder(Module):
    """1x1 entry projection, decoder_blocks conv blocks, 1x1 classifier."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig, in_channels: int, out_channels: int):
        super().__init__()
        width = config.decoder_width
        self.entry = ConvBlock(rng, in_channels, width, kernel_size=1,
                               norm_groups=config.norm_groups, act=config.activation)
        self.blocks = ModuleList([
            ConvBlock(rng, width, width, config.kernel_size, norm_groups=config.norm_groups, act=config.activation)
            for _ in range(config.decoder_blocks)
        ])
        self.classifier = Conv2d(rng, width, out_channels, kernel_size=1)

    def forward(self, x: Tensor, height: int, width: int) -> Tensor:
        x = self.entry(x)
        for block in self.blocks:
            x = block(x)
        return ops.bilinear_resize(self.classifier(x), height, width)


class AsymmetricSiameseNetwork(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed)
        widths = config.encoder_widths
        shallow_width, deep_width = widths[0], widths[-1]
        classes = config.num_classes + 1

        self.encoder = Encoder(rng, config, config.input_channels)
        self.change_encoder = ChangeEncoder(rng, config, 2 * config.input_channels)

        if config.use_asp:
            hidden = config.mlp_hidden
            self.v_generator = BranchWeightGenerator(rng, shallow_width, hidden, config.n_c * config.n_d,
                                                     config.activation)
            self.w_generator = BranchWeightGenerator(rng, shallow_width, hidden, config.n_r, config.activation)
            self.wc_generator = BranchWeightGenerator(rng, shallow_width, hidden, config.n_r, config.activation)
            self.asp = SpatialPyramid(rng, config, deep_width)
            self.semantic_fusion = PyramidFusion(rng, config, deep_width, shallow_width)
            semantic_in = sum(config.multipliers)
        else:
            semantic_in = deep_width + shallow_width
        self.semantic_decoder = Decoder(rng, config, semantic_in, classes)

        change_in = deep_width + shallow_width
        if config.use_asp:
            change_in += sum(config.multipliers[k] for (_, _, k) in self._spatial_keys())
        if config.use_arp:
            self.arp = RepresentationPyramid(rng, config, deep_width, shallow_width)
            change_in += len(self._repr_keys()) * config.pair_width
        self.change_decoder = Decoder(rng, config, change_in, 2)

        self.psi1 = ATLHead(rng, classes, config.atl_width, classes, config.activation)
        self.psi2 = ATLHead(rng, 2 * classes, config.atl_width, 2, config.activation)
        self.assign_names()
        logger.info(f"Built ASN with {sum(p.size for p in self.parameters())} parameters")

    # ------------------------------------------------------------------
    def _spatial_keys(self) -> List[PairKey]:
        c = self.config
        return [(j1, j2, k) for k in range(c.n_r) for j1 in range(c.n_d) for j2 in range(c.n_d)
                if j1 == j2 or c.asymmetric_pairs]

    def _repr_keys(self) -> List[Tuple[int, int]]:
        c = self.config
        return [(k1, k2) for k1 in range(c.n_r) for k2 in range(c.n_r) if k1 == k2 or c.asymmetric_pairs]

    def atl_parameters(self):
        return self.psi1.parameters() + self.psi2.parameters()

    def freeze_for_atl(self) -> None:
        self.set_trainable(False)
        self.psi1.set_trainable(True)
        self.psi2.set_trainable(True)

    def check_inputs(self, image1: ImageInput, image2: ImageInput) -> Tuple[Tensor, Tensor]:
        image1, image2 = ops.as_tensor(image1), ops.as_tensor(image2)
        if image1.shape != image2.shape:
            raise DimensionError(f"image shapes differ: {image1.shape} vs {image2.shape}")
        if image1.ndim != 4 or image1.shape[1] != self.config.input_channels:
            raise DimensionError(
                f"expected [N, {self.config.input_channels}, H, W] images, got {image1.shape}"
            )
        stride = self.config.stride_product
        if image1.shape[2] % stride or image1.shape[3] % stride:
            raise GeometryError(
                f"extent {image1.shape[2]}x{image1.shape[3]} is not divisible by the encoder stride {stride}"
            )
        return image1, image2

    # ------------------------------------------------------------------
    def branch_weights(self, shallow1: Tensor, shallow2: Tensor, shallow_c: Tensor) -> BranchWeights:
        return BranchWeights(
            v1=self.v_generator(shallow1), v2=self.v_generator(shallow2),
            w1=self.w_generator(shallow1), w2=self.w_generator(shallow2),
            wc=self.wc_generator(shallow_c),
        )

    def semantic_head(self, levels: List[Tensor], height: int, width: int) -> Tensor:
        return self.semantic_decoder(ops.concat(levels, axis=1), height, width)

    def forward(self, image1: ImageInput, image2: ImageInput) -> ForwardOutputs:
        image1, image2 = self.check_inputs(image1, image2)
        height, width = image1.shape[2:]
        stages1, stages2 = self.encoder(image1), self.encoder(image2)
        stages_c = self.change_encoder(ops.concat([image1, image2], axis=1), stages1, stages2)
        shallow1, shallow2, shallow_c = stages1[0], stages2[0], stages_c[0]
        deep1, deep2, deep_c = stages1[-1], stages2[-1], stages_c[-1]
        s_height, s_width = shallow_c.shape[2:]

        deep_c_up = ops.bilinear_resize(deep_c, s_height, s_width)
        change_parts = [deep_c_up, shallow_c]
        if not self.config.use_asp:
            m1 = self.semantic_head([ops.bilinear_resize(deep1, s_height, s_width), shallow1], height, width)
            m2 = self.semantic_head([ops.bilinear_resize(deep2, s_height, s_width), shallow2], height, width)
            c_raw = self.change_decoder(ops.concat(change_parts, axis=1), height, width)
            return ForwardOutputs(m1, m2, c_raw)

        weights = self.branch_weights(shallow1, shallow2, shallow_c)
        spatial1, spatial2 = self.asp(deep1, weights.v1), self.asp(deep2, weights.v2)
        m1 = self.semantic_head(self.semantic_fusion(spatial1, deep1, shallow1, weights.w1), height, width)
        m2 = self.semantic_head(self.semantic_fusion(spatial2, deep2, shallow2, weights.w2), height, width)
        outputs = ForwardOutputs(m1, m2, None, weights, spatial1, spatial2)

        outputs.pair_maps_spatial = spatial_pairs(spatial1, spatial2, weights.w1, weights.w2, self.config)
        change_parts += [ops.bilinear_resize(outputs.pair_maps_spatial[key], s_height, s_width)
                         for key in self._spatial_keys()]
        if self.config.use_arp:
            change_levels = self.arp.change_pyramid(deep_c, shallow_c, weights.wc)
            outputs.repr1 = self.arp.integrate_date(change_levels, spatial1)
            outputs.repr2 = self.arp.integrate_date(change_levels, spatial2)
            outputs.pair_maps_repr = representation_pairs(outputs.repr1, outputs.repr2, self.config)
            change_parts += [outputs.pair_maps_repr[key] for key in self._repr_keys()]
        outputs.c_raw = self.change_decoder(ops.concat(change_parts, axis=1), height, width)
        return outputs


def build_model(config: ModelConfig) -> AsymmetricSiameseNetwork:
    return AsymmetricSiameseNetwork(config)


def branch_weights(model: AsymmetricSiameseNetwork, shallow1: Tensor, shallow2: Tensor,
                   shallow_c: Tensor) -> BranchWeights:
    return model.branch_weights(shallow1, shallow2, shallow_c)


def asp_forward(model: AsymmetricSiameseNetwork, deep1: Tensor, deep2: Tensor, weights: BranchWeights):
    """Fused pyramids of both dates plus their spatial pair maps."""
    spatial1, spatial2 = model.asp(deep1, weights.v1), model.asp(deep2, weights.v2)
    return spatial1, spatial2, spatial_pairs(spatial1, spatial2, weights.w1, weights.w2, model.config)


def semantic_fuse(model: AsymmetricSiameseNetwork, pyramid: Dict[SpatialKey, Tensor], deep: Tensor,
                  shallow: Tensor, w: Tensor) -> List[Tensor]:
    return model.semantic_fusion(pyramid, deep, shallow, w)


def arp_forward(model: AsymmetricSiameseNetwork, change: Tensor, change_shallow: Tensor,
                spatial1: Dict[SpatialKey, Tensor], spatial2: Dict[SpatialKey, Tensor],
                weights: BranchWeights) -> Dict[Tuple[int, int], Tensor]:
    change_levels = model.arp.change_pyramid(change, change_shallow, weights.wc)
    levels1 = model.arp.integrate_date(change_levels, spatial1)
    levels2 = model.arp.integrate_date(change_levels, spatial2)
    return representation_pairs(levels1, levels2, model.config)
