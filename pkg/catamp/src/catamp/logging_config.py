import os
import sys
import logging
import logging.handlers
from typing import Optional

from dotenv import load_dotenv

from .log_once import log_once_info


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """
    Configures the 'catamp' package logger to output to stderr and, when LOG_FILE
    is set, to a rotating file. Stdout is left alone: it only carries JSON summaries.
    """
    load_dotenv()

    log_file = os.getenv("LOG_FILE")
    log_level_name = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    log_level = getattr(logging, log_level_name, logging.INFO)

    # --- Configure only the 'catamp' logger ---
    catamp_logger = logging.getLogger('catamp')
    catamp_logger.setLevel(log_level)

    # Prevent log messages from being passed to the root logger
    catamp_logger.propagate = False

    # Clear any existing handlers to prevent duplicates
    if catamp_logger.hasHandlers():
        catamp_logger.handlers.clear()

    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    formatter = logging.Formatter(log_format, '%Y-%m-%d %H:%M:%S')

    # --- Console Handler ---
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    catamp_logger.addHandler(console_handler)

    # --- Rotating File Handler ---
    if log_file:
        try:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir)

            file_handler = logging.handlers.TimedRotatingFileHandler(
                log_file, when="midnight", interval=1, backupCount=7, encoding='utf-8'
            )
            file_handler.setFormatter(formatter)
            catamp_logger.addHandler(file_handler)
        except Exception as e:
            catamp_logger.error(f"Failed to set up file logging for '{log_file}': {e}", exc_info=True)

    log_once_info(
        catamp_logger,
        "logging_initialized",
        "Logging for 'catamp' package initialized. Level: %s. Log file: %s",
        log_level_name,
        log_file or "<none>",
    )
    return catamp_logger
