"""
Configuration layer for SecLand
Typed config sections loaded from one JSON file with CLI overrides on top
"""

import json
import os
from dataclasses import fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

from .errors import ConfigError

T = TypeVar('T')

OUTPUT_ROOT_ENV = 'SECLAND_OUTPUT_ROOT'
DEFAULT_OUTPUT_ROOT = 'runs'

# Top-level keys accepted in a config file
SECTIONS = ('generate', 'train', 'detector', 'predictor', 'render', 'pose_model', 'rig',
            'als', 'vae', 'analysis')


def section_from_dict(cls: Type[T], entry: Optional[Mapping[str, Any]], section: Optional[str] = None) -> T:
    """
    Build a config dataclass from a mapping, rejecting unknown keys.

    Nested dataclass fields are built recursively from nested mappings.
    """
    entry = dict(entry or {})
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(entry) - set(known))
    if unknown:
        name = section or cls.__name__
        raise ConfigError(f"Unknown {name} keys: {', '.join(unknown)}", section=name, keys=unknown)
    defaults = cls()
    for key, value in list(entry.items()):
        current = getattr(defaults, key)
        if is_dataclass(current) and isinstance(value, Mapping):
            entry[key] = section_from_dict(type(current), value, f"{section or cls.__name__}.{key}")
        elif isinstance(current, tuple) and isinstance(value, list):
            entry[key] = tuple(value)
    try:
        return cls(**entry)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid {section or cls.__name__} config: {e}", section=section)


def load_config_file(path: Optional[str]) -> Dict[str, Dict[str, Any]]:
    """
    Read a JSON config file of named sections

    Args:
        path: File path, or None for an empty config

    Returns:
        Mapping of section name to its raw key/value mapping
    """
    if not path:
        return {}
    config_path = Path(path)
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {config_path}", path=str(config_path))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {config_path} is not valid JSON: {e}", path=str(config_path))
    if not isinstance(payload, dict):
        raise ConfigError(f"Config file {config_path} must hold a JSON object", path=str(config_path))
    unknown = sorted(set(payload) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config sections: {', '.join(unknown)}", path=str(config_path), keys=unknown)
    return payload


def resolve_section(cls: Type[T], file_config: Mapping[str, Mapping[str, Any]], section: str,
                    overrides: Optional[Mapping[str, Any]] = None) -> T:
    """
    Precedence: dataclass defaults < config file section < explicit overrides (None values ignored)
    """
    merged = dict(file_config.get(section, {}))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    return section_from_dict(cls, merged, section)


def output_root(explicit: Optional[str] = None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))
