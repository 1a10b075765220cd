"""
Pose containers for SecLand
Primary/secondary landmark blocks in 3D (world or canonical) and 2D (pixels)
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..utils.errors import NonFiniteError, ShapeError


@dataclass
class Pose3D:
    """3D landmarks split into primary (P, 3) and secondary (S, 3) blocks"""

    primary: np.ndarray
    secondary: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.primary = np.asarray(self.primary, dtype=np.float64).reshape(-1, 3)
        self.secondary = np.asarray(self.secondary, dtype=np.float64).reshape(-1, 3)
        if not (np.all(np.isfinite(self.primary)) and np.all(np.isfinite(self.secondary))):
            raise NonFiniteError("Pose3D coordinates must be finite")

    @property
    def num_primary(self) -> int:
        return self.primary.shape[0]

    @property
    def num_secondary(self) -> int:
        return self.secondary.shape[0]

    def stacked(self) -> np.ndarray:
        """All landmarks as (P + S, 3), primary first"""
        return np.vstack([self.primary, self.secondary])

    def vector(self) -> np.ndarray:
        """Flattened pose vector [primary..., secondary...]"""
        return self.stacked().reshape(-1)

    @classmethod
    def from_stacked(cls, points: np.ndarray, num_primary: int, normalized: bool = False) -> 'Pose3D':
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(points[:num_primary], points[num_primary:], normalized)


@dataclass
class Pose2D:
    """2D landmarks in pixels with per-landmark visibility"""

    primary: np.ndarray
    secondary: np.ndarray
    primary_visible: Optional[np.ndarray] = field(default=None)
    secondary_visible: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.primary = np.asarray(self.primary, dtype=np.float64).reshape(-1, 2)
        self.secondary = np.asarray(self.secondary, dtype=np.float64).reshape(-1, 2)
        if self.primary_visible is None:
            self.primary_visible = np.ones(self.primary.shape[0], dtype=bool)
        if self.secondary_visible is None:
            self.secondary_visible = np.ones(self.secondary.shape[0], dtype=bool)
        self.primary_visible = np.asarray(self.primary_visible, dtype=bool).reshape(-1)
        self.secondary_visible = np.asarray(self.secondary_visible, dtype=bool).reshape(-1)
        if self.primary_visible.shape[0] != self.primary.shape[0] or \
                self.secondary_visible.shape[0] != self.secondary.shape[0]:
            raise ShapeError("Pose2D visibility flags do not match landmark counts",
                             primary=self.primary.shape, secondary=self.secondary.shape)
        if not (np.all(np.isfinite(self.primary)) and np.all(np.isfinite(self.secondary))):
            raise NonFiniteError("Pose2D coordinates must be finite")

    @property
    def num_primary(self) -> int:
        return self.primary.shape[0]

    @property
    def num_secondary(self) -> int:
        return self.secondary.shape[0]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.primary, self.secondary])

    def visibility(self) -> np.ndarray:
        return np.concatenate([self.primary_visible, self.secondary_visible])

    def vector(self) -> np.ndarray:
        return self.stacked().reshape(-1)

    @classmethod
    def from_stacked(cls, points: np.ndarray, num_primary: int,
                     visible: Optional[np.ndarray] = None) -> 'Pose2D':
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if visible is None:
            visible = np.ones(points.shape[0], dtype=bool)
        visible = np.asarray(visible, dtype=bool)
        return cls(points[:num_primary], points[num_primary:], visible[:num_primary], visible[num_primary:])
