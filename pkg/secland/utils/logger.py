"""
Logging utility for SecLand
Configures the package logger once per command; modules log through get_logger children
"""

import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

LOG_FORMAT = '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
LOG_DIR_ENV = 'SECLAND_LOG_DIR'
LIBRARY_LOGGERS = ('py.warnings', 'asyncio')


def default_log_path(command: str = 'run', log_dir: Optional[str] = None) -> Path:
    """Timestamped log path under log_dir, $SECLAND_LOG_DIR or ./logs"""
    root = Path(log_dir or os.environ.get(LOG_DIR_ENV) or 'logs')
    stamp = datetime.now().strftime('%Y-%m-%d_%H-%M-%S')
    return root / f'secland_{command}_{stamp}.log'


def setup_logger(verbose: bool = False, log_file: Optional[str] = None, command: str = 'run',
                 log_dir: Optional[str] = None, to_file: bool = True) -> logging.Logger:
    """
    Configure the 'secland' logger for one command

    Args:
        verbose: Show DEBUG records on stderr (WARNING and above otherwise)
        log_file: Explicit log file path; overrides the timestamped default
        command: Subcommand name used in the default file name
        log_dir: Directory for the default file name
        to_file: Attach the DEBUG file handler at all

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger('secland')
    logger.setLevel(logging.DEBUG)
    logger.propagate = False
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG if verbose else logging.WARNING)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # numpy/scipy RuntimeWarnings and asyncio loop errors from the dataset writer and job runner
    logging.captureWarnings(True)
    library_loggers = [logging.getLogger(name) for name in LIBRARY_LOGGERS]
    for library_logger in library_loggers:
        library_logger.setLevel(logging.WARNING)
        library_logger.propagate = False
        library_logger.handlers = [console_handler]

    if not to_file:
        return logger

    file_path = Path(log_file) if log_file else default_log_path(command, log_dir)
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(file_path, encoding='utf-8')
    except OSError as e:
        logger.warning(f"Could not create log file {file_path}: {e}")
        return logger

    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)
    for library_logger in library_loggers:
        library_logger.addHandler(file_handler)
    logger.debug(f"Logging {command} to {file_path}")
    return logger


def get_logger(name: str) -> logging.Logger:
    """Get a child logger with the given name"""
    return logging.getLogger(f'secland.{name}')
