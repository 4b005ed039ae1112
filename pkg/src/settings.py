from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import cache

VERSION = "0.1.0"


@dataclass(frozen=True)
class Settings:
    environment: str
    log_level: int
    workers: int
    market_tz: str


@cache
def get_settings() -> Settings:
    level_name = os.environ.get("LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        level = logging.INFO

    try:
        workers = int(os.environ.get("ESSREV_WORKERS", "0"))
    except ValueError:
        workers = 0

    return Settings(
        environment=os.environ.get("ENVIRONMENT", "prod"),
        log_level=level,
        workers=workers if workers > 0 else (os.cpu_count() or 1),
        market_tz=os.environ.get("ESSREV_MARKET_TZ", "America/New_York"),
    )
