from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    """Process-wide settings read from ``CAINN_*`` environment variables."""

    model_config = SettingsConfigDict(env_prefix="CAINN_", extra="ignore")

    precision: Literal["f32", "f64"] = Field(default="f32")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(default="INFO")
