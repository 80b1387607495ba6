# schemas/base.py
from typing import Any, Dict, Type, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from app.exceptions.custom_exceptions import ConfigError

SchemaT = TypeVar("SchemaT", bound="SCDSchema")


class SCDSchema(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    @classmethod
    def parse(cls: Type[SchemaT], data: Dict[str, Any]) -> SchemaT:
        """Validate a plain mapping, reporting violations as ConfigError"""
        try:
            return cls.model_validate(data or {})
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in err['loc']) or cls.__name__}: {err['msg']}"
                for err in e.errors()
            )
            raise ConfigError(f"invalid {cls.__name__}: {problems}")
