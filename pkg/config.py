"""
Configuration settings for the NAFD cell-free mmWave laboratory using Pydantic Settings.

This module provides centralized runtime configuration with environment variable
support and validation. Physical and learning parameters live in the pydantic
models under models/; this module only holds process-level knobs.
"""

from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    # Application metadata
    app_name: str = Field(default="NAFD Cell-Free mmWave Lab", description="Application name")
    app_version: str = Field(default="1.0.0", description="Application version")
    debug: bool = Field(default=False, description="Debug mode flag")

    # Job server configuration
    host: str = Field(default="127.0.0.1", description="Job server host address")
    port: int = Field(default=8000, description="Job server port number")

    # Output handling
    output_dir: str = Field(default="runs", description="Default directory for experiment outputs")
    schema_version: int = Field(
        default=1,
        description="Schema version embedded in every CSV/JSON artifact"
    )

    # Compute settings
    max_workers: int = Field(
        default=4,
        description="Worker threads used for independent Monte Carlo trials"
    )
    max_covariance_antennas: int = Field(
        default=32,
        description="Largest N_AP for which the N_AP^2 x N_AP^2 inter-AP covariance is built"
    )

    # Logging configuration
    log_level: str = Field(
        default="INFO",
        description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )
    log_file: str = Field(default="nafd_lab.log", description="Log file name")

    @field_validator("port")
    @classmethod
    def validate_port(cls, v):
        """Validate port number is within valid range."""
        if not 1 <= v <= 65535:
            raise ValueError("Port must be between 1 and 65535")
        return v

    @field_validator("max_workers", "max_covariance_antennas", "schema_version")
    @classmethod
    def validate_positive_integers(cls, v):
        """Validate positive integer fields."""
        if v <= 0:
            raise ValueError("Value must be positive")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level is valid."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of: {', '.join(valid_levels)}")
        return v.upper()

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        env_prefix="NAFD_",
    )


# Create settings instance
settings = Settings()

# Directory configuration (computed from settings)
BASE_DIR = Path(__file__).parent
RUNS_DIR = BASE_DIR / settings.output_dir

SCHEMA_VERSION = settings.schema_version
