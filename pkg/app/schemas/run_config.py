# schemas/run_config.py
from typing import List, Literal, Optional, Sequence, Tuple

import yaml
from pydantic import Field, field_validator, model_validator

from app import constants
from app.config import settings
from app.exceptions.custom_exceptions import ConfigError
from app.helpers.files import read_yaml, set_dotted
from app.schemas.base import SCDSchema
from app.schemas.model_config import ModelConfig, OptimizerConfig


class DataConfig(SCDSchema):
    root: str = "data/toy"
    crop: int = Field(constants.TRAIN_CROP, ge=8)
    scale_range: Tuple[float, float] = constants.AUG_SCALE_RANGE
    flip_probability: float = Field(constants.FLIP_PROBABILITY, ge=0, le=1)
    batch_size: int = Field(4, ge=1)
    max_train: Optional[int] = Field(None, ge=1)
    max_test: Optional[int] = Field(None, ge=1)

    @field_validator("scale_range")
    @classmethod
    def validate_scale_range(cls, v):
        low, high = v
        if low <= 0 or high < low:
            raise ValueError("scale_range must be (low, high) with 0 < low <= high")
        return v


class TTAConfig(SCDSchema):
    scales: List[float] = Field(default_factory=lambda: [1.0])
    flip: bool = False

    @field_validator("scales")
    @classmethod
    def validate_scales(cls, v):
        if not v or any(scale <= 0 for scale in v):
            raise ValueError("scales must be a non-empty list of positive factors")
        return v

    @classmethod
    def from_flag(cls, flag: str) -> "TTAConfig":
        """'none', 'ms', 'flip' or 'ms,flip'."""
        parts = {part.strip() for part in flag.split(",") if part.strip()}
        unknown = parts - {"none", "ms", "flip"}
        if unknown:
            raise ConfigError(f"unknown tta option(s): {', '.join(sorted(unknown))}")
        scales = list(constants.TTA_SCALES) if "ms" in parts else [1.0]
        return cls(scales=scales, flip="flip" in parts)


class TrainingConfig(SCDSchema):
    base_epochs: int = Field(constants.BASE_EPOCHS, ge=0)
    atl_epochs: int = Field(constants.ATL_EPOCHS, ge=0)
    validate_every: int = Field(1, ge=1)
    checkpoint_every: int = Field(1, ge=1)
    predictor: Literal["asn", "intuitive"] = "asn"
    use_categorical_weights: bool = True


class RunConfig(SCDSchema):
    model: ModelConfig = Field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    tta: TTAConfig = Field(default_factory=TTAConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    output_dir: str = "runs/toy"
    seed: Optional[int] = None

    @model_validator(mode="before")
    @classmethod
    def fill_seed(cls, data):
        # SCD_SEED is the fallback when the file leaves the seed unset; the
        # model seed follows the run seed unless it is set on its own
        if not isinstance(data, dict):
            return data
        seed = data.get("seed")
        if seed is None:
            seed = settings.SCD_SEED
        model = data.get("model")
        if model is None:
            model = {"seed": seed}
        elif isinstance(model, dict) and model.get("seed") is None:
            model = {**model, "seed": seed}
        return {**data, "seed": seed, "model": model}

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Sequence[str] = ()) -> "RunConfig":
        """YAML file (optional) with `dotted.key=value` overrides applied on top."""
        data = read_yaml(path) if path else {}
        for override in overrides:
            key, separator, raw = override.partition("=")
            if not separator or not key:
                raise ConfigError(f"override '{override}' is not of the form key=value")
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError as e:
                raise ConfigError(f"cannot parse override value '{raw}': {e}")
            set_dotted(data, key.strip(), value)
        return cls.parse(data)
