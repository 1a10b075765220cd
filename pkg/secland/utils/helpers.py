"""
Helper utility functions for SecLand
Contains common functions used across the application
"""

import hashlib
import os
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from .errors import ConfigError


def sha256_file(path, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def tree_digest(root) -> str:
    """
    Content hash of a directory: sha256 over (relative path, file hash) pairs in sorted order.
    """
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob('*') if p.is_file()):
        digest.update(path.relative_to(root).as_posix().encode('utf-8'))
        digest.update(sha256_file(path).encode('ascii'))
    return digest.hexdigest()


def derive_seed(master_seed: int, *labels) -> int:
    """
    Stable 63-bit seed from a master seed and labels, independent of call order.

    Args:
        master_seed: Run-level seed
        labels: Any values that identify the unit of work (frame id, job key, ...)

    Returns:
        Non-negative integer seed
    """
    text = '|'.join([str(master_seed)] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:8], 'little') >> 1


def parse_list(value: Optional[str], cast=str, allowed: Optional[Sequence] = None) -> List:
    """
    Split a comma separated CLI value

    Args:
        value: Raw option value such as "0.014,0.043"
        cast: Conversion applied to every item
        allowed: Optional whitelist of accepted items

    Returns:
        List of converted items (empty for None or "")
    """
    if not value:
        return []
    items = []
    for raw in value.split(','):
        raw = raw.strip()
        if not raw:
            continue
        try:
            item = cast(raw)
        except ValueError:
            raise ConfigError(f"Invalid list item '{raw}'", value=value)
        if allowed is not None and item not in allowed:
            raise ConfigError(f"'{raw}' is not one of: {', '.join(str(a) for a in allowed)}", value=value)
        items.append(item)
    return items


def default_threads() -> int:
    return max(os.cpu_count() or 1, 1)


def chunked(items: Sequence, size: int) -> Iterable[Sequence]:
    size = max(int(size), 1)
    for i in range(0, len(items), size):
        yield items[i:i + size]


def format_duration(seconds: float) -> str:
    """Format a duration as 1h02m03s / 2m03s / 4.2s"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes, secs = divmod(int(round(seconds)), 60)
    if minutes < 60:
        return f"{minutes}m{secs:02d}s"
    hours, minutes = divmod(minutes, 60)
    return f"{hours}h{minutes:02d}m{secs:02d}s"
