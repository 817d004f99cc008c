# Config file loading and typed-section helpers for affectdan.
# Config files are YAML; JSON files load through the same parser.

import dataclasses
import logging
import os
import sys
from typing import Any, Type, TypeVar

import yaml

from ..errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILENAME = "affectdan_config.yaml"

T = TypeVar("T")


def get_base_path() -> str:
    """Project root (or the bundle directory when frozen)."""
    if getattr(sys, "frozen", False) and hasattr(sys, "_MEIPASS"):
        return sys._MEIPASS
    # this file is src/affectdan/utils/resource_loader.py
    return os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", ".."))


BASE_RESOURCE_PATH = get_base_path()


def find_config(config_path: str | None = None) -> str | None:
    """Resolve an explicit path, else the default config in the cwd or project root."""
    if config_path:
        return config_path
    for candidate in (os.path.join(os.getcwd(), DEFAULT_CONFIG_FILENAME),
                      os.path.join(BASE_RESOURCE_PATH, DEFAULT_CONFIG_FILENAME)):
        if os.path.exists(candidate):
            return candidate
    return None


def load_config(config_path: str | None = None) -> dict:
    """Load a YAML/JSON config mapping. No file at all yields an empty mapping."""
    path = find_config(config_path)
    if path is None:
        logger.debug("No %s found; using built-in defaults.", DEFAULT_CONFIG_FILENAME)
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"configuration file '{path}' not found") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse configuration file '{path}': {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"configuration file '{path}' must hold a mapping at the top level")
    logger.info("Loaded configuration from %s", path)
    return data


def dataclass_from_dict(cls: Type[T], data: dict | None, section: str) -> T:
    """Build dataclass ``cls`` from a plain mapping, rejecting keys it does not declare."""
    if data is None:
        return cls()
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section '{section}'")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"invalid section '{section}': {e}") from e


def dataclass_to_dict(obj: Any) -> dict:
    return dataclasses.asdict(obj)
