# schemas/metrics.py
import json
from typing import Dict, List, Optional

from pydantic import Field

from app.schemas.base import SCDSchema


class MetricReport(SCDSchema):
    oa: float = Field(ge=0, le=1)
    kappa: float
    iou1: float = Field(ge=0, le=1)
    iou2: float = Field(ge=0, le=1)
    miou: float = Field(ge=0, le=1)
    sek: float = Field(le=1)
    # "(l1,l2)" -> categorical SeK, None when the type is absent from pred and gt
    per_type_sek: Dict[str, Optional[float]] = Field(default_factory=dict)
    counts: List[List[int]]
    num_classes: int = Field(ge=1)
    class_names: List[str] = Field(default_factory=list)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls.parse(json.loads(text))
