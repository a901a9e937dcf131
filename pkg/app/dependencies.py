import logging
import os
from typing import Optional

import numpy as np

from app.config import Settings, settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_settings() -> Settings:
    """Get the process-wide settings instance"""
    return settings


def configure_logging(config: Optional[Settings] = None, level: Optional[str] = None) -> None:
    """Configure root logging once for the CLI"""
    config = config or settings
    logging.basicConfig(
        level=(level or config.LOG_LEVEL).upper(),
        format=LOG_FORMAT,
    )


def get_rng(seed: Optional[int]) -> np.random.Generator:
    """Seeded numpy generator; every random draw in the package goes through one"""
    return np.random.default_rng(seed)


def replication_seed(base_seed: int, index: int) -> int:
    """Seed of replication `index` derived from the experiment seed"""
    return base_seed + index


def get_worker_count(config: Optional[Settings] = None) -> int:
    """Worker cap from NETMATCH_THREADS, bounded by the CPU count"""
    config = config or settings
    requested = max(1, int(config.NETMATCH_THREADS))
    return min(requested, os.cpu_count() or 1)
