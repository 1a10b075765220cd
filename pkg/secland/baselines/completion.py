"""
Matrix completion for SecLand baselines
Masked low-rank factorization by alternating least squares, with optional weighted-lambda regularization
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..utils.errors import ConfigError, DataError, ShapeError
from ..utils.logger import get_logger

logger = get_logger('baselines.completion')

DIVERGENCE_FACTOR = 10.0


@dataclass
class CompletionMatrix:
    """Rows are pose samples, columns flattened landmark coordinates; mask marks observed entries"""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.mask.shape != self.values.shape:
            raise ShapeError(f"Mask of shape {self.mask.shape} does not match matrix of shape {self.values.shape}",
                             left=self.mask.shape, right=self.values.shape)
        # Hidden entries never leak into the factorization
        self.values = np.where(self.mask, np.nan_to_num(self.values), 0.0)

    @property
    def shape(self):
        return self.values.shape

    @property
    def row_counts(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def column_counts(self) -> np.ndarray:
        return self.mask.sum(axis=0)


@dataclass
class CompletionResult:
    completed: np.ndarray
    reconstruction: np.ndarray
    row_factors: np.ndarray
    column_factors: np.ndarray
    objectives: List[float] = field(default_factory=list)
    diverged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.objectives) - 1, 0)


def _ridge_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched (k, r, r) x = (k, r) solves with a pseudo-inverse fallback for singular systems"""
    try:
        return np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.einsum('kij,kj->ki', np.linalg.pinv(gram), rhs)


def _update(values: np.ndarray, mask: np.ndarray, fixed: np.ndarray, penalties: np.ndarray) -> np.ndarray:
    """Exact minimizer of the masked ridge problem for every row given the other factor"""
    weights = mask.astype(np.float64)
    gram = np.einsum('ij,jk,jl->ikl', weights, fixed, fixed)
    gram += penalties[:, None, None] * np.eye(fixed.shape[1])[None]
    rhs = (weights * values) @ fixed
    return _ridge_solve(gram, rhs)


def masked_objective(matrix: CompletionMatrix, row_factors: np.ndarray, column_factors: np.ndarray,
                     row_penalties: np.ndarray, column_penalties: np.ndarray) -> float:
    residual = np.where(matrix.mask, matrix.values - row_factors @ column_factors.T, 0.0)
    return float(np.sum(residual ** 2)
                 + np.sum(row_penalties * np.sum(row_factors ** 2, axis=1))
                 + np.sum(column_penalties * np.sum(column_factors ** 2, axis=1)))


def als_complete(matrix: CompletionMatrix, rank: int, iterations: int = 100, reg: float = 1e-2,
                 weighted: bool = False, seed: int = 0) -> CompletionResult:
    """
    Complete a partially observed matrix with a rank-r factorization U W^T.

    Args:
        matrix: Values with observed-entry mask
        rank: Factor rank (1 <= rank <= min(rows, columns))
        iterations: Fixed number of alternating sweeps
        reg: Ridge weight lambda
        weighted: Scale lambda by each row's and column's observation count (weighted-lambda)
        seed: Factor initialization seed

    Returns:
        CompletionResult; observed entries are passed through unchanged in `completed`

    Raises:
        ConfigError: rank out of range or negative regularization
        DataError: a column has no observed entry
    """
    rows, columns = matrix.shape
    if rank < 1 or rank > min(rows, columns):
        raise ConfigError(f"Rank must be in [1, {min(rows, columns)}] for a {rows}x{columns} matrix, got {rank}",
                          rank=rank, shape=(rows, columns))
    if reg < 0:
        raise ConfigError(f"Regularization must be non-negative, got {reg}")
    empty = np.flatnonzero(matrix.column_counts == 0)
    if empty.size:
        raise DataError(f"Columns {empty.tolist()} have no observed entry", columns=empty.tolist())

    if weighted:
        row_penalties = reg * matrix.row_counts.astype(np.float64)
        column_penalties = reg * matrix.column_counts.astype(np.float64)
    else:
        row_penalties = np.full(rows, float(reg))
        column_penalties = np.full(columns, float(reg))

    rng = np.random.default_rng(seed)
    observed = matrix.values[matrix.mask]
    scale = np.sqrt(max(float(np.sqrt(np.mean(observed ** 2))), 1e-12) / rank)
    row_factors = rng.standard_normal((rows, rank)) * scale
    column_factors = rng.standard_normal((columns, rank)) * scale

    objectives = [masked_objective(matrix, row_factors, column_factors, row_penalties, column_penalties)]
    diverged = False
    for _ in range(iterations):
        row_factors = _update(matrix.values, matrix.mask, column_factors, row_penalties)
        column_factors = _update(matrix.values.T, matrix.mask.T, row_factors, column_penalties)
        objectives.append(masked_objective(matrix, row_factors, column_factors, row_penalties, column_penalties))
        if not np.isfinite(objectives[-1]) or objectives[-1] > DIVERGENCE_FACTOR * objectives[0]:
            logger.warning(f"ALS diverged after {len(objectives) - 1} sweeps (objective {objectives[-1]:.3e})")
            diverged = True
            break

    reconstruction = row_factors @ column_factors.T
    return CompletionResult(
        completed=np.where(matrix.mask, matrix.values, reconstruction),
        reconstruction=reconstruction,
        row_factors=row_factors,
        column_factors=column_factors,
        objectives=objectives,
        diverged=diverged,
    )


@dataclass
class NeighborQuery:
    matrix: CompletionMatrix
    neighbors: np.ndarray
    distances: np.ndarray

    @property
    def nearest_distance(self) -> float:
        return float(self.distances[0])


def nearest_neighbor_query(labeled: np.ndarray, query_primary: np.ndarray, primary_columns: Sequence[int],
                           neighbors: Optional[int] = None) -> NeighborQuery:
    """
    Place a query below its nearest labeled rows for completion.

    Args:
        labeled: (N, D) fully observed pose vectors
        query_primary: Observed primary coordinates of the query, ordered as primary_columns
        primary_columns: Column indices of the primary coordinates
        neighbors: Keep this many nearest labeled rows (Euclidean over primary columns); None keeps all

    Returns:
        NeighborQuery whose last matrix row is the query with secondary columns masked
    """
    labeled = np.asarray(labeled, dtype=np.float64)
    if labeled.ndim != 2 or labeled.shape[0] == 0:
        raise DataError("Nearest-neighbor completion needs a non-empty labeled set")
    primary_columns = np.asarray(primary_columns, dtype=np.int64)
    query_primary = np.asarray(query_primary, dtype=np.float64).reshape(-1)
    if query_primary.shape[0] != primary_columns.shape[0]:
        raise ShapeError(f"Query has {query_primary.shape[0]} primary coordinates, expected {primary_columns.shape[0]}",
                         left=query_primary.shape[0], right=primary_columns.shape[0])

    distances = np.linalg.norm(labeled[:, primary_columns] - query_primary[None, :], axis=1)
    order = np.argsort(distances, kind='stable')
    if neighbors is not None:
        order = order[:max(int(neighbors), 1)]

    query_row = np.zeros(labeled.shape[1])
    query_row[primary_columns] = query_primary
    query_mask = np.zeros(labeled.shape[1], dtype=bool)
    query_mask[primary_columns] = True
    values = np.vstack([labeled[order], query_row])
    mask = np.vstack([np.ones((order.shape[0], labeled.shape[1]), dtype=bool), query_mask])
    return NeighborQuery(CompletionMatrix(values, mask), order, distances[order])
