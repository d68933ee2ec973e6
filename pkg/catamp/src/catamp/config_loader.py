"""
Centralized configuration loader for catamp.
Loads and caches the built-in YAML parameter tables at first access to avoid repeated file I/O.
"""

import os
from pathlib import Path
from typing import Dict, Any, List, Optional
import yaml
import logging
from threading import Lock

from .log_once import log_once_info

logger = logging.getLogger(__name__)


class ConfigLoader:
    """
    Singleton configuration loader that caches the reference-default YAML tables.
    Configurations are loaded once at first access and reused by every scenario and worker.
    """

    _instance: Optional['ConfigLoader'] = None
    _lock: Lock = Lock()

    def __new__(cls) -> 'ConfigLoader':
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        """Initialize the config loader and load configurations."""
        if self._initialized:
            return

        self._initialized = True
        self._defaults: Dict[str, Any] = {}
        self._config_dir = Path(__file__).parent / "config"
        self._load_configs()

    def _load_configs(self) -> None:
        """Load YAML configurations from disk. A missing or broken file is fatal."""
        defaults_path = self._config_dir / "reference_defaults.yaml"
        try:
            with open(defaults_path, "r", encoding="utf-8") as f:
                self._defaults = yaml.safe_load(f) or {}
        except Exception as e:
            logger.error("ConfigLoader: Failed to load reference_defaults.yaml - %s", str(e))
            raise
        log_once_info(
            logger,
            "config_defaults_loaded",
            "ConfigLoader: Loaded reference_defaults.yaml - version=%s sections=%d",
            self._defaults.get("version"),
            len(self._defaults),
        )

    @property
    def defaults(self) -> Dict[str, Any]:
        """Get the cached reference defaults."""
        return self._defaults

    def reload(self) -> None:
        """
        Reload configurations from disk.
        Only needed when the YAML changed while the process is running.
        """
        logger.info("ConfigLoader: Reloading configurations from disk")
        self._load_configs()

    @classmethod
    def get_instance(cls) -> 'ConfigLoader':
        """Get the singleton instance of ConfigLoader."""
        return cls()


def get_reference_defaults() -> Dict[str, Any]:
    """Get the cached reference defaults."""
    return ConfigLoader.get_instance().defaults


def get_table1(which: str) -> Dict[str, Any]:
    """Transfer-table block for `first_edag` or `second_edag`."""
    table = get_reference_defaults().get("table1", {})
    if which not in table:
        raise KeyError(f"Unknown transfer-table block '{which}', expected one of {sorted(table)}")
    return table[which]


def get_snap_table() -> List[float]:
    """Tabulated SNAP phases indexed by Fock number."""
    return [float(p) for p in get_reference_defaults().get("snap_table2", [])]


def defaults_version() -> str:
    return str(get_reference_defaults().get("version", "unknown"))


def get_worker_count() -> int:
    """Worker threads for scans: CATAMP_WORKERS, else the CPU count capped at 8."""
    raw = os.getenv("CATAMP_WORKERS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ConfigLoader: Ignoring non-integer CATAMP_WORKERS=%r", raw)
    return max(1, min(8, os.cpu_count() or 1))


def reload_configs() -> None:
    """
    Reload configurations from disk.
    Use this sparingly, only when you need to refresh configs during runtime.
    """
    ConfigLoader.get_instance().reload()
