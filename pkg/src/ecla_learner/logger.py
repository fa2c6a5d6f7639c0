"""
Logger Configuration Module
===========================

Configures logging for ecla_learner runs: a rotating log file written into
the run's output directory plus console output. The level comes from the
caller, else from the ``ECLA_LOG_LEVEL`` environment variable, else INFO.

Example usage:
--------------
    from ecla_learner.logger import configure_logging, get_logger

    configure_logging(log_dir="runs/synthetic")
    logger = get_logger(__name__)
    logger.info("Logging is configured.")

License:
--------
MIT License
"""

import logging
import logging.handlers
import os
from typing import Optional

LOG_FORMAT = "%(asctime)s: %(levelname)s: %(message)s"
LOG_LEVEL_ENV = "ECLA_LOG_LEVEL"
QUIET_LIBRARIES = ("botocore", "boto3", "urllib3", "s3transfer")


def resolve_log_level(log_level: Optional[int] = None) -> int:
    """
    Resolves the effective log level.

    :param log_level: Explicit level; wins over the environment.
    :returns: A ``logging`` level constant.
    """
    if log_level is not None:
        return log_level
    name = os.environ.get(LOG_LEVEL_ENV, "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def configure_logging(
    log_dir: Optional[str] = None,
    log_filename: str = "LOG_ecla.log",
    log_level: Optional[int] = None,
    max_bytes: int = 10**6,
    backup_count: int = 3,
) -> None:
    """
    Configures logging for a run.

    Args:
        log_dir (Optional[str]): Directory where the log file will be saved.
        Default is None, which means the current directory.
        log_filename (str): Name of the log file. Default is 'LOG_ecla.log'.
        log_level (Optional[int]): Log level. Default is taken from
        ECLA_LOG_LEVEL, falling back to logging.INFO.
        max_bytes (int): Maximum size of the log file in bytes before
        rolling over. Default is 10^6 bytes.
        backup_count (int): Number of backup log files to keep. Default is 3.
    """
    level = resolve_log_level(log_level)
    if log_dir and not os.path.exists(log_dir):
        os.makedirs(log_dir)

    log_file_path = os.path.join(log_dir or "", log_filename)
    formatter = logging.Formatter(LOG_FORMAT)

    file_handler = logging.handlers.RotatingFileHandler(
        log_file_path, maxBytes=max_bytes, backupCount=backup_count
    )
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)

    # replaces handlers from any earlier call
    logging.basicConfig(level=level, handlers=[file_handler, console_handler], force=True)

    for library in QUIET_LIBRARIES:
        logging.getLogger(library).setLevel(max(level, logging.WARNING))


def get_logger(name: str) -> logging.Logger:
    """
    Gets a logger with the specified name.

    Args:
        name (str): Name of the logger.

    Returns:
        logging.Logger: Configured logger instance.
    """
    return logging.getLogger(name)
