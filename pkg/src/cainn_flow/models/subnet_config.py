from enum import Enum
from typing import Any, ClassVar, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SubnetVariant(str, Enum):
    """Ordering of 3x3 convolutions and CBAM inside a coupling subnet."""

    CA = "CA"
    AC = "AC"
    CAC = "CAC"
    CC = "CC"


class SubnetConfig(BaseModel):
    """Shape and seed of one coupling subnet.

    ``out_channels`` is twice the width of the coupling half the subnet
    transforms: the first half of the output feeds s, the second half t.
    """

    DEFAULT_REDUCTION_RATIO: ClassVar[int] = 16

    variant: SubnetVariant = Field(default=SubnetVariant.CAC)
    in_channels: int = Field(..., gt=0)
    hidden_channels: Optional[int] = Field(default=None, gt=0)
    out_channels: int = Field(..., gt=0)
    reduction_ratio: int = Field(default=DEFAULT_REDUCTION_RATIO, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    model_config = ConfigDict(frozen=True)

    @field_validator("variant", mode="before")
    @classmethod
    def normalize_variant(cls, v: Any) -> Any:
        if isinstance(v, str):
            return v.strip().upper()
        return v

    @field_validator("out_channels")
    @classmethod
    def validate_out_channels(cls, v: int) -> int:
        if v % 2:
            raise ValueError(f"out_channels must be even (s and t halves), got {v}")
        return v

    @model_validator(mode="before")
    @classmethod
    def default_hidden_channels(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("hidden_channels") is None:
            data = dict(data)
            data["hidden_channels"] = data.get("in_channels")
        return data

    @property
    def half_width(self) -> int:
        """Width of the coupling half the subnet produces s and t for."""
        return self.out_channels // 2
