"""
Log deduplication for scan workers.
Parameter scans run many integrations in threads; advisory warnings such as
truncation hints should reach the log once per process, not once per worker.
"""
import logging
from threading import Lock
from typing import Callable

_logged_once_cache = set()
_lock = Lock()


def log_once(key: str, log_func: Callable, *args, **kwargs) -> bool:
    """
    Log a message only once per process.

    Args:
        key: Unique key for this log message
        log_func: The logging function to call (e.g., logger.info)
        *args: Arguments to pass to log_func
        **kwargs: Keyword arguments to pass to log_func

    Returns:
        True if the message was emitted by this call.
    """
    with _lock:
        if key in _logged_once_cache:
            return False
        _logged_once_cache.add(key)
    log_func(*args, **kwargs)
    return True


def reset_log_once() -> None:
    """Forget every key (used between CLI runs in one process and by tests)."""
    with _lock:
        _logged_once_cache.clear()


def log_once_info(logger: logging.Logger, key: str, message: str, *args) -> bool:
    """Convenience wrapper for logger.info with deduplication."""
    return log_once(key, logger.info, message, *args)


def log_once_warning(logger: logging.Logger, key: str, message: str, *args) -> bool:
    """Convenience wrapper for logger.warning with deduplication."""
    return log_once(key, logger.warning, message, *args)
