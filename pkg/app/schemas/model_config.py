# schemas/model_config.py
from typing import List, Literal

from pydantic import Field, field_validator, model_validator

from app import constants
from app.schemas.base import SCDSchema


class OptimizerConfig(SCDSchema):
    base_lr: float = Field(constants.BASE_LR, gt=0)
    poly_power: float = Field(constants.POLY_POWER, ge=0)
    momentum: float = Field(constants.MOMENTUM, ge=0, lt=1)
    weight_decay: float = Field(constants.WEIGHT_DECAY, ge=0)
    total_steps: int = Field(1, ge=1)


class ModelConfig(SCDSchema):
    num_classes: int = Field(6, ge=1)
    input_channels: int = Field(3, ge=1)
    spatial_rates: List[int] = Field(default_factory=lambda: list(constants.SPATIAL_RATES))
    multipliers: List[int] = Field(default_factory=lambda: list(constants.MULTIPLIERS))
    channel_params: List[int] = Field(default_factory=lambda: list(constants.CHANNEL_PARAMS))
    kernel_size: int = Field(constants.KERNEL_SIZE, ge=1)
    tau: float = Field(constants.TAU, gt=0, lt=1)
    gamma: float = Field(constants.GAMMA, ge=0)
    alpha: float = Field(constants.LOSS_ALPHA, ge=0)
    beta: float = Field(constants.LOSS_BETA, ge=0)
    encoder_blocks: int = Field(4, ge=1)
    decoder_blocks: int = Field(4, ge=1)

    # widths of the desk-scale network
    base_width: int = Field(8, ge=1)
    max_width: int = Field(32, ge=1)
    decoder_width: int = Field(32, ge=1)
    pair_width: int = Field(16, ge=1)
    mlp_hidden: int = Field(16, ge=1)
    atl_width: int = Field(16, ge=1)
    norm_groups: int = Field(4, ge=1)
    activation: Literal["relu", "softplus"] = "relu"

    # ablation switches
    use_asp: bool = True
    use_arp: bool = True
    asymmetric_pairs: bool = True

    seed: int = 0

    @field_validator("spatial_rates")
    @classmethod
    def validate_rates(cls, v):
        if not v or any(rate < 0 for rate in v):
            raise ValueError("spatial_rates must be a non-empty list of non-negative integers")
        return v

    @field_validator("multipliers", "channel_params")
    @classmethod
    def validate_positive(cls, v):
        if not v or any(entry < 1 for entry in v):
            raise ValueError("must be a non-empty list of positive integers")
        return v

    @field_validator("kernel_size")
    @classmethod
    def validate_kernel(cls, v):
        if v % 2 == 0:
            raise ValueError("kernel_size must be odd so dilated convolutions keep their extent")
        return v

    @model_validator(mode="after")
    def validate_ablation(self):
        if self.use_arp and not self.use_asp:
            raise ValueError("use_arp requires use_asp: the representation pyramid consumes aSP outputs")
        return self

    @property
    def n_d(self) -> int:
        return len(self.spatial_rates)

    @property
    def n_c(self) -> int:
        return len(self.channel_params)

    @property
    def n_r(self) -> int:
        return len(self.multipliers)

    @property
    def stride_product(self) -> int:
        return 2 ** self.encoder_blocks

    @property
    def encoder_widths(self) -> List[int]:
        return [min(self.base_width * 2 ** stage, self.max_width) for stage in range(self.encoder_blocks)]

    def dilation(self, rate: int) -> int:
        # rate 0 is the local level: a plain dilation-1 convolution
        return max(rate, 1)
