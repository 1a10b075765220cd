"""
Output management utility for SecLand
Run directories, CSV/JSON result files, config snapshots and content manifests
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from .. import SCHEMA_VERSION, __version__
from .errors import DataError
from .helpers import sha256_file, tree_digest

CONFIG_FILE = 'config.json'
MANIFEST_FILE = 'manifest.json'


def _cell(value: Any) -> Any:
    """Flatten a value for a CSV cell"""
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value, sort_keys=True)
    if value is None:
        return ''
    return value


def write_csv(path, rows: Sequence[Mapping[str, Any]], fieldnames: Optional[Sequence[str]] = None) -> Path:
    """
    Save rows as CSV

    Args:
        path: Destination file
        rows: Row mappings
        fieldnames: Fixed column order; defaults to the sorted union of row keys

    Returns:
        Path written (a header-only file when rows is empty and fieldnames are given)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        all_fields = set()
        for row in rows:
            all_fields.update(row.keys())
        fieldnames = sorted(all_fields)

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction='ignore', lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({field: _cell(row.get(field)) for field in fieldnames})
    return path


def read_csv(path) -> List[Dict[str, str]]:
    path = Path(path)
    try:
        with open(path, 'r', newline='', encoding='utf-8') as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}", path=str(path))


def write_json(path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    return path


def read_json(path) -> Any:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read {path}: {e}", path=str(path))


class CsvLog:
    """Append-only CSV with a fixed header, flushed after every row"""

    def __init__(self, path, fieldnames: Sequence[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fieldnames = list(fieldnames)
        self._file = open(self.path, 'w', newline='', encoding='utf-8')
        self._writer = csv.DictWriter(self._file, fieldnames=self.fieldnames, extrasaction='ignore',
                                      lineterminator='\n')
        self._writer.writeheader()

    def write(self, row: Mapping[str, Any]):
        self._writer.writerow({field: _cell(row.get(field)) for field in self.fieldnames})
        self._file.flush()

    def close(self):
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> 'CsvLog':
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


class OutputManager:
    """Manages one self-describing output directory"""

    def __init__(self, output_dir, command: str, inputs: Optional[Iterable] = None):
        self.output_dir = Path(output_dir)
        self.command = command
        self.inputs = [Path(p) for p in (inputs or [])]
        self.outputs: List[Path] = []
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def save_csv(self, name: str, rows: Sequence[Mapping[str, Any]],
                 fieldnames: Optional[Sequence[str]] = None) -> Path:
        path = write_csv(self.path(name), rows, fieldnames)
        self._track(path)
        return path

    def save_json(self, name: str, payload: Any) -> Path:
        path = write_json(self.path(name), payload)
        self._track(path)
        return path

    def track(self, path) -> Path:
        """Register a file written by someone else (checkpoints, logs)"""
        path = Path(path)
        self._track(path)
        return path

    def _track(self, path: Path):
        if path not in self.outputs:
            self.outputs.append(path)

    def save_config(self, sections: Mapping[str, Any], options: Optional[Mapping[str, Any]] = None) -> Path:
        """
        Write the resolved configuration snapshot

        Args:
            sections: Resolved config sections by name (dataclasses already converted to dicts)
            options: Command options that are not part of any section
        """
        payload = {
            'schema_version': SCHEMA_VERSION,
            'secland_version': __version__,
            'command': self.command,
            'sections': dict(sections),
            'options': dict(options or {}),
        }
        return write_json(self.path(CONFIG_FILE), payload)

    def write_manifest(self) -> Path:
        """Content hashes of the command's inputs and of every tracked output"""
        inputs = {}
        for path in self.inputs:
            if path.is_dir():
                inputs[str(path)] = tree_digest(path)
            elif path.is_file():
                inputs[str(path)] = sha256_file(path)
        outputs = {}
        for path in sorted(self.outputs):
            if path.is_file():
                outputs[path.relative_to(self.output_dir).as_posix() if self._inside(path) else str(path)] = \
                    sha256_file(path)
        config_path = self.path(CONFIG_FILE)
        payload = {
            'schema_version': SCHEMA_VERSION,
            'command': self.command,
            'inputs': inputs,
            'outputs': outputs,
            'config_sha256': sha256_file(config_path) if config_path.is_file() else None,
        }
        return write_json(self.path(MANIFEST_FILE), payload)

    def _inside(self, path: Path) -> bool:
        try:
            path.relative_to(self.output_dir)
            return True
        except ValueError:
            return False
