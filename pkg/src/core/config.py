"""
Core configuration management for the delta stability analyzer
"""
from typing import Any

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings with environment variable support.

    Every field can be overridden through an environment variable carrying the
    ``STABILITY_`` prefix (``STABILITY_WORKERS=4``), or through a ``.env`` file.
    """

    # Application Settings
    app_name: str = Field(default="delta-stability")
    app_version: str = Field(default="1.0.0")
    log_level: str = Field(default="WARNING")

    # Solver
    delta: float = Field(default=0.01, description="Perturbation bound of the delta-decision")
    workers: int = Field(default=1, description="Threads evaluating top-level pieces")
    deterministic: bool = Field(default=True)
    max_split_depth: int = Field(default=48, description="Bisections allowed along one piece lineage")
    precision_bits: int = Field(default=80, description="Working precision of transcendental kernels")

    # Lyapunov stability encoding
    eps_min: float = Field(default=0.05)
    eps_max: float = Field(default=1.0)
    delta_floor: float = Field(default=0.02)
    time_bound: float = Field(default=5.0)

    # Convergence conjunct of asymptotic stability
    conv_time: float = Field(default=5.0)
    conv_radius: float = Field(default=0.5)
    conv_delta_floor: float = Field(default=0.02)
    conv_eps_min: float = Field(default=0.015)
    conv_eps_max: float = Field(default=1.0)
    conv_window: float = Field(default=0.5)
    conv_window_floor: float = Field(default=0.05)

    # Lyapunov template test
    exclusion_radius: float = Field(default=0.1)

    # Hybrid systems
    k_steps: int = Field(default=1)
    path_cap: int = Field(default=256)

    # ODE enclosures
    tol_factor: float = Field(default=0.125, description="ODE tolerance as a fraction of delta")
    t_max: float = Field(default=64.0)
    escape_margin: float = Field(default=4.0, description="Scale of the integration domain around X")
    tube_cache_size: int = Field(default=2048)

    @field_validator("log_level", mode="before")
    @classmethod
    def _normalize_log_level(cls, value: Any) -> str:
        """Accept lower-case level names such as ``debug``."""
        level = str(value).upper()
        if level not in {"CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"}:
            raise ValueError(f"Unknown log level: {value}")
        return level

    @field_validator("workers")
    @classmethod
    def _positive_workers(cls, value: int) -> int:
        if value < 1:
            raise ValueError("workers must be at least 1")
        return value

    # Pydantic v2 settings configuration
    model_config = SettingsConfigDict(
        env_prefix="STABILITY_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",  # Ignore unknown environment variables
    )


# Global settings instance
settings = Settings()
