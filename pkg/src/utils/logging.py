"""Logging setup shared by the CLI and scripts."""

import sys

from loguru import logger

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss,SSS} - {name} - {level} - {message}"


def configure_logging(level: str = "INFO") -> None:
    """Route all log records to stderr at the given level."""
    logger.remove()
    logger.add(lambda message: sys.stderr.write(message), level=level.upper(), format=LOG_FORMAT)
