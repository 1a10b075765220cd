"""
Error types for SecLand
Every error carries the process exit code the CLI reports for it
"""

from typing import Any, Dict


class SeclandError(Exception):
    """Base class for all structured SecLand errors"""

    exit_code = 1
    kind = 'error'

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {'error': self.kind, 'message': self.message}
        payload.update({k: _plain(v) for k, v in self.details.items()})
        return payload


class ConfigError(SeclandError):
    exit_code = 2
    kind = 'config_error'


class DataError(SeclandError):
    exit_code = 3
    kind = 'data_error'


class SchemaVersionError(DataError):
    kind = 'schema_version_mismatch'


class EmptyDatasetError(DataError):
    kind = 'empty_dataset'


class NumericalError(SeclandError):
    exit_code = 4
    kind = 'numerical_error'


class ShapeError(NumericalError):
    """Operand shapes do not conform for a primitive"""
    kind = 'shape_mismatch'


class DegenerateProjectionError(NumericalError):
    kind = 'degenerate_projection'


class DegenerateGeometryError(NumericalError):
    kind = 'degenerate_geometry'


class DegenerateFrameError(NumericalError):
    kind = 'degenerate_frame'


class NonFiniteError(NumericalError):
    kind = 'non_finite'


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return list(value)
    if hasattr(value, 'tolist'):
        return value.tolist()
    return value
