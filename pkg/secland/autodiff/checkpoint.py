"""
Checkpoint codec for SecLand
Flat JSON map from parameter paths to shape + row-major values
"""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from .. import SCHEMA_VERSION
from ..utils.errors import DataError, SchemaVersionError


def encode_checkpoint(params: Mapping[str, np.ndarray], kind: str,
                      meta: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    return {
        'version': SCHEMA_VERSION,
        'kind': kind,
        'meta': dict(meta or {}),
        'parameters': {
            name: {
                'shape': list(np.shape(value)),
                'values': np.asarray(value, dtype=np.float64).reshape(-1).tolist(),
            }
            for name, value in sorted(params.items())
        },
    }


def decode_checkpoint(payload: Mapping[str, Any], kind: Optional[str] = None) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    version = payload.get('version')
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"Checkpoint schema version {version} is not supported (expected {SCHEMA_VERSION})",
                                 found=version, expected=SCHEMA_VERSION)
    if kind is not None and payload.get('kind') != kind:
        raise DataError(f"Checkpoint holds a '{payload.get('kind')}' model, expected '{kind}'",
                        found=payload.get('kind'), expected=kind)
    params = {}
    for name, entry in payload.get('parameters', {}).items():
        shape = tuple(entry['shape'])
        values = np.asarray(entry['values'], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise DataError(f"Parameter {name} has {values.size} values for shape {shape}", parameter=name)
        params[name] = values.reshape(shape)
    return params, dict(payload.get('meta', {}))


def save_checkpoint(path, params: Mapping[str, np.ndarray], kind: str,
                    meta: Optional[Mapping[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(encode_checkpoint(params, kind, meta), f, sort_keys=True)
    return path


def load_checkpoint(path, kind: Optional[str] = None) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read checkpoint {path}: {e}", path=str(path))
    return decode_checkpoint(payload, kind)
