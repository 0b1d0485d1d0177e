from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class AnomalyMap(BaseModel):
    """Per-site anomaly scores at feature resolution, optionally upsampled to image size."""

    scores: np.ndarray
    upsampled: Optional[np.ndarray] = None

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("scores", "upsampled", mode="before")
    @classmethod
    def validate_grid(cls, v):
        if v is None:
            return v
        array = np.array(v, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"Anomaly map must be 2-D, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("Anomaly map holds non-finite scores")
        array.setflags(write=False)
        return array

    @field_validator("scores")
    @classmethod
    def validate_non_negative(cls, v: np.ndarray) -> np.ndarray:
        if v.size and v.min() < 0:
            raise ValueError("Anomaly scores must be non-negative")
        return v

    @property
    def shape(self):
        return tuple(self.scores.shape)

    @property
    def pixels(self) -> np.ndarray:
        """Image-resolution scores when available, feature-resolution otherwise."""
        return self.upsampled if self.upsampled is not None else self.scores


class ImageScore(BaseModel):
    path: str
    label: int = Field(..., ge=0, le=1)
    score: float


class EvalResult(BaseModel):
    """Image- and pixel-level AUROC with the counts behind them."""

    image_auroc: float = Field(..., ge=0.0, le=1.0)
    pixel_auroc: float = Field(..., ge=0.0, le=1.0)
    per_image: List[ImageScore] = Field(default_factory=list)
    n_positive_images: int = Field(..., ge=0)
    n_negative_images: int = Field(..., ge=0)
    n_positive_pixels: int = Field(..., ge=0)
    n_negative_pixels: int = Field(..., ge=0)

    @property
    def n_images(self) -> int:
        return self.n_positive_images + self.n_negative_images

    @property
    def n_pixels(self) -> int:
        return self.n_positive_pixels + self.n_negative_pixels

    @property
    def image_scores(self) -> List[float]:
        return [entry.score for entry in self.per_image]

    def to_summary(self) -> Dict[str, Any]:
        """JSON document printed by the eval command."""
        return {
            "image_auroc": self.image_auroc,
            "pixel_auroc": self.pixel_auroc,
            "n_images": self.n_images,
            "n_pixels": self.n_pixels,
            "n_positive_images": self.n_positive_images,
            "n_negative_images": self.n_negative_images,
            "n_positive_pixels": self.n_positive_pixels,
            "n_negative_pixels": self.n_negative_pixels,
            "per_image": [entry.model_dump() for entry in self.per_image],
        }


class AblationEntry(BaseModel):
    """Metrics of one (variant, step count) model in an ablation sweep."""

    variant: str
    steps: int = Field(..., ge=1)
    image_auroc: float = Field(..., ge=0.0, le=1.0)
    pixel_auroc: float = Field(..., ge=0.0, le=1.0)
    final_loss: Optional[float] = None
