# services/asn/gradcheck.py
"""End-to-end finite-difference check of the toy network, ATL heads included."""
from typing import Optional

import numpy as np
from logzero import logger

from app.schemas.model_config import ModelConfig
from app.services.asn.atl import atl_forward
from app.services.asn.losses import GroundTruth, scd_loss
from app.services.asn.model import build_model
from app.services.tensor.gradcheck import GradCheckReport, grad_check
from app.services.tensor.tensor import Tensor

MODEL_TOLERANCE = 1e-3
CHECK_EXTENT = 8


def toy_config(**overrides) -> ModelConfig:
    """
    Smallest configuration that still exercises every asymmetric pair.
    softplus keeps the loss smooth so central differences stay meaningful.
    """
    values = dict(
        num_classes=3, input_channels=2, encoder_blocks=2, decoder_blocks=1,
        spatial_rates=[0, 1, 2], multipliers=[2, 4], channel_params=[1, 2],
        base_width=4, max_width=8, decoder_width=8, pair_width=4, mlp_hidden=4, atl_width=4,
        norm_groups=2, activation="softplus", gamma=0.5,
    )
    values.update(overrides)
    return ModelConfig.parse(values)


def model_grad_check(config: Optional[ModelConfig] = None, tolerance: float = MODEL_TOLERANCE,
                     max_coords: Optional[int] = 6, seed: int = 0, extent: int = CHECK_EXTENT) -> GradCheckReport:
    config = config or toy_config(seed=seed)
    model = build_model(config)
    rng = np.random.default_rng(seed)
    image1 = Tensor(rng.uniform(size=(1, config.input_channels, extent, extent)))
    image2 = Tensor(rng.uniform(size=(1, config.input_channels, extent, extent)))
    changed = rng.uniform(size=(1, extent, extent)) < 0.4
    label1 = np.where(changed, rng.integers(1, config.num_classes + 1, size=changed.shape), 0)
    label2 = np.where(changed, rng.integers(1, config.num_classes + 1, size=changed.shape), 0)
    gt = GroundTruth.from_labels(label1, label2)

    # zero-initialised ATL output layers would leave the first psi layers without gradient
    for head in (model.psi1, model.psi2):
        head.second.weight.data = rng.normal(scale=0.1, size=head.second.weight.shape)

    def loss_fn() -> Tensor:
        outputs = model(image1, image2)
        refined = atl_forward(outputs.m1_raw, outputs.m2_raw, outputs.c_raw, config.gamma, model.psi1, model.psi2)
        return scd_loss(refined.m1_raw, refined.m2_raw, refined.c_raw, gt, config.alpha, config.beta).total

    report = grad_check(loss_fn, dict(model.named_parameters()), tolerance=tolerance,
                        max_coords=max_coords, seed=seed)
    logger.info(f"model gradcheck over {len(report.params)} parameter tensors: {report.summary()}")
    return report
