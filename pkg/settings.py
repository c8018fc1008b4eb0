"""
Runtime settings for chronoframe.

Values are read from the environment or a `.env` file:
    CHRONOFRAME_TOLERANCE=1e-10
    CHRONOFRAME_SEED=1234
    CHRONOFRAME_SAMPLES=8
    CHRONOFRAME_LOG_LEVEL=INFO
"""

import logging

import numpy as np
from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# --- Setup ---
load_dotenv()


class Settings(BaseSettings):
    """Numerical defaults shared by the library, the CLI and the tool server."""

    model_config = SettingsConfigDict(env_prefix="CHRONOFRAME_", extra="ignore")

    TOLERANCE: float = 1e-10
    SEED: int = 1234
    SAMPLES: int = 8
    LOG_LEVEL: str = "INFO"


settings = Settings()

logger = logging.getLogger(__name__)


def resolve_tol(tol: float | None) -> float:
    return settings.TOLERANCE if tol is None else float(tol)


def resolve_samples(samples: int | None) -> int:
    value = settings.SAMPLES if samples is None else int(samples)
    if value < 1:
        raise ValueError(f"samples must be positive, got {value}")
    return value


def make_rng(seed: int | None = None) -> np.random.Generator:
    """Seeded generator; falls back to CHRONOFRAME_SEED so runs are reproducible by default."""
    chosen = settings.SEED if seed is None else int(seed)
    logger.debug(f"Random generator seeded with {chosen}")
    return np.random.default_rng(chosen)
