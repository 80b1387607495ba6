# services/asn/inference.py
"""
Checkpoint inference and prediction files.

    <out>/label1/<id>.png    indexed class at t1, 0 where unchanged
    <out>/label2/<id>.png    indexed class at t2, 0 where unchanged
    <out>/change/<id>.png    change probability, 8-bit
    <out>/overlay/<id>.png   both maps in palette colors, unchanged pixels white
"""
import os
from typing import Dict, Optional, Tuple

import numpy as np
from logzero import logger

from app.exceptions.custom_exceptions import DimensionError
from app.exceptions.tensor_exceptions import CheckpointError
from app.helpers.decorator import logged
from app.schemas.model_config import ModelConfig
from app.schemas.run_config import TTAConfig
from app.services.asn.model import AsymmetricSiameseNetwork, build_model
from app.services.asn.prediction import Predictor, SemanticChangePrediction, TTAPredictor, to_batch
from app.services.dataset.palette import LabelPalette
from app.services.dataset.records import render_pair, save_gray, save_label_pair
from app.services.tensor.checkpoint import load_model, read_meta

CHANGE_DIR = "change"
OVERLAY_DIR = "overlay"


def load_checkpoint_model(path: str) -> Tuple[AsymmetricSiameseNetwork, Dict]:
    """Rebuild the network from the config stored with the weights."""
    meta = read_meta(path)
    if "model" not in meta:
        raise CheckpointError(f"{path} carries no model config")
    model = build_model(ModelConfig.parse(meta["model"]))
    load_model(path, model)
    return model, meta


@logged("pair prediction")
def predict_pair(model: AsymmetricSiameseNetwork, image1: np.ndarray, image2: np.ndarray,
                 tta: Optional[TTAConfig] = None, use_atl: bool = True,
                 predictor: Predictor = "asn", tau: Optional[float] = None) -> SemanticChangePrediction:
    """Prediction for one H x W x d image pair."""
    if image1.shape != image2.shape:
        raise DimensionError(f"image shapes differ: {image1.shape} vs {image2.shape}")
    tta = tta or TTAConfig()
    runner = TTAPredictor(model, tta.scales, tta.flip, use_atl, tau)
    return runner.predict(to_batch([image1]), to_batch([image2]), predictor)[0]


def write_prediction(out_dir: str, sample_id: str, prediction: SemanticChangePrediction,
                     palette: LabelPalette) -> Dict[str, str]:
    label1, label2 = save_label_pair(out_dir, sample_id, prediction.pairs, palette)
    change = save_gray(os.path.join(out_dir, CHANGE_DIR, f"{sample_id}.png"), prediction.change_prob)
    overlay = os.path.join(out_dir, OVERLAY_DIR, f"{sample_id}.png")
    os.makedirs(os.path.dirname(overlay), exist_ok=True)
    render_pair(prediction.label1, prediction.label2, palette).save(overlay)
    logger.info(f"Wrote prediction {sample_id} to {out_dir}")
    return {"label1": label1, "label2": label2, "change": change, "overlay": overlay}
