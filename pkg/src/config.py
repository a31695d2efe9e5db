"""Configuration management for the delayed-choice simulator."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix ``MZI_``)."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="MZI_",
        case_sensitive=False,
        extra="ignore",
    )

    # Simulation defaults
    default_seed: int = Field(default=20080530, ge=0, lt=2**64)
    n_jobs: int = Field(default=1, description="Workers for phase/R sweeps (-1 = all cores)")

    # Logging
    log_level: str = Field(default="INFO")
    log_json: bool = Field(default=False)


# Global settings instance
settings = Settings()

# Project paths
PROJECT_ROOT = Path(__file__).parent.parent
ARTIFACTS_DIR = PROJECT_ROOT / "artifacts"
RUNS_DIR = ARTIFACTS_DIR / "runs"
LOGS_DIR = PROJECT_ROOT / "logs"


def ensure_directories() -> None:
    """Ensure required directories exist.

    IMPORTANT: Call this from entrypoints (the CLI) instead of at module
    import time to avoid failures in read-only or testing environments.

    Creates:
    - artifacts/
    - artifacts/runs/
    - logs/
    """
    ARTIFACTS_DIR.mkdir(exist_ok=True)
    RUNS_DIR.mkdir(exist_ok=True)
    LOGS_DIR.mkdir(exist_ok=True)
