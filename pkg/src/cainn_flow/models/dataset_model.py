from enum import Enum
from pathlib import Path
from typing import ClassVar, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SampleLabel(str, Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"


class ManifestRecord(BaseModel):
    """One manifest line: feature file, label, optional mask and original image size."""

    feature_path: str = Field(..., min_length=1)
    label: SampleLabel
    mask_path: Optional[str] = Field(default=None)
    image_height: int = Field(..., gt=0)
    image_width: int = Field(..., gt=0)

    model_config = ConfigDict(frozen=True)

    @field_validator("label", mode="before")
    @classmethod
    def normalize_label(cls, v):
        if isinstance(v, str):
            return v.strip().lower()
        return v

    @field_validator("mask_path", mode="before")
    @classmethod
    def normalize_mask_path(cls, v):
        if v in ("", "-"):
            return None
        return v

    @model_validator(mode="after")
    def anomalous_needs_mask(self) -> "ManifestRecord":
        if self.label is SampleLabel.ANOMALOUS and self.mask_path is None:
            raise ValueError(f"Anomalous record {self.feature_path} has no mask")
        return self

    @property
    def is_anomalous(self) -> bool:
        return self.label is SampleLabel.ANOMALOUS


class DatasetManifest(BaseModel):
    """Ordered records; relative paths resolve against ``base_dir``."""

    records: List[ManifestRecord] = Field(default_factory=list)
    base_dir: str = Field(default=".")

    model_config = ConfigDict(frozen=True)

    def resolve(self, path: str) -> Path:
        candidate = Path(path)
        return candidate if candidate.is_absolute() else Path(self.base_dir) / candidate

    @property
    def labels(self) -> List[int]:
        return [int(record.is_anomalous) for record in self.records]


class SynthConfig(BaseModel):
    """Desk-scale texture benchmark: counts, image size, anomaly geometry and seeds.

    Anomalous blobs carry their own texture, smoothed with ``anomaly_texture_sigma``
    and standardised over the blob, raised by ``intensity_shift``.
    """

    DEFAULT_IMAGE_SIZE: ClassVar[int] = 32

    n_train: int = Field(default=200, ge=1)
    n_test_normal: int = Field(default=40, ge=1)
    n_test_anomalous: int = Field(default=40, ge=1)
    image_size: int = Field(default=DEFAULT_IMAGE_SIZE, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    extractor_seed: int = Field(default=0, ge=0, lt=2**64)
    smoothing_sigma: float = Field(default=1.0, gt=0)
    anomaly_min_size: int = Field(default=8, gt=0)
    anomaly_max_size: int = Field(default=16, gt=0)
    intensity_shift: float = Field(default=1.0)
    # 0 pastes white noise into the blob
    anomaly_texture_sigma: float = Field(default=0.0, ge=0)

    model_config = ConfigDict(frozen=True)

    @field_validator("image_size")
    @classmethod
    def validate_image_size(cls, v: int) -> int:
        if v % 4:
            raise ValueError(f"image_size must be divisible by 4 for the extractor, got {v}")
        return v

    @model_validator(mode="after")
    def validate_anomaly_range(self) -> "SynthConfig":
        if self.anomaly_min_size > self.anomaly_max_size:
            raise ValueError(
                f"anomaly_min_size {self.anomaly_min_size} exceeds "
                f"anomaly_max_size {self.anomaly_max_size}"
            )
        return self
