# schemas/dataset.py
from enum import Enum
from typing import List, Optional

from pydantic import Field, model_validator

from app.constants import MANIFEST_VERSION
from app.schemas.base import SCDSchema


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class ManifestEntry(SCDSchema):
    id: str = Field(min_length=1)
    split: Split


class DatasetManifest(SCDSchema):
    version: int = MANIFEST_VERSION
    num_classes: int = Field(ge=1, le=255)
    class_names: List[str]
    entries: List[ManifestEntry]
    # directory the manifest was read from, never serialized
    root: Optional[str] = Field(None, exclude=True)

    @model_validator(mode="after")
    def validate_entries(self):
        if len(self.class_names) != self.num_classes:
            raise ValueError(f"{len(self.class_names)} class names given for {self.num_classes} classes")
        ids = [entry.id for entry in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("sample ids must be unique, so no id may appear in both splits")
        return self

    def ids(self, split: Optional[Split] = None) -> List[str]:
        return [entry.id for entry in self.entries if split is None or entry.split == Split(split)]


class ChangeKind(str, Enum):
    CLASS = "class"
    REBUILD = "rebuild"
    MIXED = "mixed"


class SynthProfile(SCDSchema):
    """How the synthetic generator plants changes."""
    name: str = "balanced"
    change_fraction: float = Field(0.2, gt=0, lt=1)
    class_weight: float = Field(0.6, ge=0)
    rebuild_weight: float = Field(0.2, ge=0)
    mixed_weight: float = Field(0.2, ge=0)
    min_region: float = Field(0.12, gt=0, le=1)
    max_region: float = Field(0.35, gt=0, le=1)
    background_regions: int = Field(6, ge=0)
    noise: float = Field(0.04, ge=0, le=0.5)
    train_ratio: float = Field(0.8, gt=0, lt=1)

    @model_validator(mode="after")
    def validate_mix(self):
        if self.class_weight + self.rebuild_weight + self.mixed_weight <= 0:
            raise ValueError("at least one change kind needs a positive weight")
        if self.min_region > self.max_region:
            raise ValueError("min_region must not exceed max_region")
        return self

    def kind_probabilities(self) -> List[float]:
        weights = [self.class_weight, self.rebuild_weight, self.mixed_weight]
        total = sum(weights)
        return [weight / total for weight in weights]


BUILTIN_PROFILES = {
    "balanced": SynthProfile(name="balanced"),
    "asymmetric": SynthProfile(name="asymmetric", class_weight=0.3, rebuild_weight=0.1, mixed_weight=0.6),
    "rebuild": SynthProfile(name="rebuild", class_weight=0.3, rebuild_weight=0.6, mixed_weight=0.1),
}
