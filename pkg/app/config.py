import os
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # App Settings
    APP_NAME: str = "netmatch"
    DEBUG: bool = os.getenv("DEBUG", "False").lower() == "true"
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "DEBUG" if DEBUG else "INFO")

    # Parallelism
    NETMATCH_THREADS: int = int(os.getenv("NETMATCH_THREADS", "1"))

    # Census
    MAX_MOTIF_SIZE: int = 5
    HOPS: int = 1
    INCLUDE_EGO: bool = False

    # Matching
    MATCH_C: float = 0.1
    MATCH_D: float = 1.0
    RIDGE_PENALTY: float = 0.1
    HOLDOUT_FRACTION: float = 0.3

    # Ingestion / evaluation
    MAX_DEGREE: int = 15
    EXACT_DISTANCE_MAX_SIZE: int = 8

    # Reports
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "results")

    class Config:
        env_file = ".env"


settings = Settings()
