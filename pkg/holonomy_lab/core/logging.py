"""Logging setup for command-line runs."""

import logging

from holonomy_lab.core.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """
    Install a single stream handler on the package logger.

    Args:
        level: Logging level name; defaults to the configured level
    """
    logger = logging.getLogger("holonomy_lab")
    logger.setLevel((level or settings.log_level).upper())
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    logger.propagate = False
