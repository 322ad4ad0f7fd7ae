# app/core/config.py
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="DYNVOCAB_", env_file=".env", extra="ignore")

    # Reproducibility
    SEED: int = 0

    # Logging
    LOG_LEVEL: str = "WARNING"

    # Joint loss weights
    CTC_WEIGHT: float = 0.3
    BIAS_WEIGHT: float = 0.05

    # Confidence activation
    THRESHOLD: float = 0.5
    J_SLACK: int = 2

    # Corpus decoding
    WORKERS: int = 1


settings = Settings()
