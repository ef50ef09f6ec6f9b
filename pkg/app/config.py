"""
Process configuration using Pydantic settings.
Loads from environment variables with validation.
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-wide settings with environment variable support."""

    # Logging
    log_level: str = "INFO"

    # Experiment registry
    database_url: str = "sqlite:///./tracklab.db"
    record_runs: bool = True

    # Runner defaults
    output_dir: str = "results"
    default_threads: int = 1
    base_seed: int = 0
    run_timeout_seconds: float = 600.0

    # Analysis
    ate_window_fraction: float = 0.2
    bound_rtol: float = 1e-9
    bound_atol: float = 1e-12

    # Powers with exponents above this are evaluated in log space
    log_space_threshold: int = 10_000

    class Config:
        env_file = ".env"
        case_sensitive = False


settings = Settings()
