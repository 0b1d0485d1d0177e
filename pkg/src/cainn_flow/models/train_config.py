from typing import Any, ClassVar, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.tensor import Precision
from .subnet_config import SubnetVariant


class TrainConfig(BaseModel):
    """Hyperparameters of one maximum-likelihood training run."""

    DEFAULT_EPOCHS: ClassVar[int] = 750
    DEFAULT_LEARNING_RATE: ClassVar[float] = 5e-4
    DEFAULT_STEPS: ClassVar[int] = 2
    DEFAULT_CLAMP_ALPHA: ClassVar[float] = 1.9

    epochs: int = Field(default=DEFAULT_EPOCHS, ge=0)
    learning_rate: float = Field(default=DEFAULT_LEARNING_RATE, gt=0)
    batch_size: int = Field(default=32, gt=0)
    steps: int = Field(default=DEFAULT_STEPS, ge=1)
    variant: SubnetVariant = Field(default=SubnetVariant.CAC)
    seed: int = Field(default=0, ge=0, lt=2**64)
    clamp_alpha: Optional[float] = Field(default=DEFAULT_CLAMP_ALPHA, gt=0)
    hidden_channels: Optional[int] = Field(default=None, gt=0)
    reduction_ratio: int = Field(default=16, gt=0)
    precision: Precision = Field(default_factory=Precision.default)

    model_config = ConfigDict(frozen=True)

    @field_validator("variant", mode="before")
    @classmethod
    def normalize_variant(cls, v: Any) -> Any:
        if isinstance(v, str):
            return v.strip().upper()
        return v
