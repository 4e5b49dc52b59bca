import logging
import sys
from functools import lru_cache


@lru_cache
def get_logger() -> logging.Logger:
    from app.conf.config import get_app_settings

    settings = get_app_settings()
    logger = logging.getLogger("dash")
    logger.setLevel(settings.log_level.upper())
    logger.propagate = False
    formatter = logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    for handler in (logging.FileHandler(settings.log_file, mode="a"), logging.StreamHandler(sys.stderr)):
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    return logger


def log(message: str, level: str = "info"):
    getattr(get_logger(), level)(message)
