import os
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

env = os.getenv("ENVIRONMENT", "dev")
env_file = f".env.{env}"


class Settings(BaseSettings):

    model_config = SettingsConfigDict(
        env_file=env_file,
        extra="ignore",
    )

    project_name: str = "dash-search"
    # DASH_THREADS caps sweep and selector worker parallelism
    dash_threads: int = Field(default_factory=lambda: os.cpu_count() or 1)
    log_file: str = "logs.log"
    log_level: Literal["debug", "info", "warning", "error"] = "info"
    output_dir: str = "out"

    @field_validator("dash_threads", mode="after")
    @classmethod
    def at_least_one_worker(cls, v: int) -> int:
        if v < 1:
            raise ValueError("DASH_THREADS must be >= 1")
        return v
