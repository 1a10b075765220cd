"""
ALS module for SecLand
Nearest-neighbor matrix completion by alternating least squares (plain and weighted-lambda)
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

import numpy as np

from ..utils.config import section_from_dict
from ..utils.errors import ConfigError
from .base import BaseMethod
from .completion import als_complete, nearest_neighbor_query


@dataclass
class AlsConfig:
    rank: int = 8
    reg: float = 1e-2
    iterations: int = 100
    neighbors: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError(f"ALS rank must be at least 1, got {self.rank}")
        if self.reg < 0 or self.iterations < 0 or self.neighbors < 1:
            raise ConfigError("ALS needs reg >= 0, iterations >= 0 and neighbors >= 1")

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'AlsConfig':
        return section_from_dict(cls, entry, 'als')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class AlsMethod(BaseMethod):
    """Completes each query together with its nearest labeled poses"""

    weighted = False

    def __init__(self, config: Optional[AlsConfig] = None, logger=None):
        super().__init__(config or AlsConfig(), logger)
        self.labeled: Optional[np.ndarray] = None
        self.diverged = 0

    def _fit(self, training: np.ndarray):
        self.labeled = training

    def _impute(self, primary: np.ndarray) -> np.ndarray:
        results = []
        for n, query in enumerate(primary):
            placed = nearest_neighbor_query(self.labeled, query, self.primary_columns, self.config.neighbors)
            if placed.neighbors.size == 1:
                results.append(self._single_neighbor(query, placed.neighbors[0]))
                continue
            rank = min(self.config.rank, placed.neighbors.size, placed.matrix.shape[1])
            if rank < self.config.rank:
                self.log_debug(f"Rank reduced to {rank} for a {placed.matrix.shape} matrix", f"query {n}")
            result = als_complete(placed.matrix, rank, self.config.iterations, self.config.reg,
                                  weighted=self.weighted, seed=self.config.seed)
            if result.diverged:
                self.diverged += 1
                self.log_warning("Completion diverged; using the last factors", f"query {n}")
            results.append(result.completed[-1, self.secondary_columns])
        return np.stack(results)

    def _single_neighbor(self, query: np.ndarray, row: int) -> np.ndarray:
        """Rank-1 completion against one labeled pose: scale its secondaries by the primary projection"""
        labeled = self.labeled[row]
        primary = labeled[self.primary_columns]
        norm = float(primary @ primary)
        scale = float(query @ primary) / norm if norm > 0 else 1.0
        return scale * labeled[self.secondary_columns]


class BalsMethod(AlsMethod):
    """ALS with weighted-lambda regularization"""

    weighted = True
