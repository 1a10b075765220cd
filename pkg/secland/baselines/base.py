"""
Base method class for SecLand baseline imputation methods
Provides common interface and functionality for all methods
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Optional, Sequence

import numpy as np

from ..utils.errors import DataError, SeclandError, ShapeError
from ..utils.logger import get_logger


class BaseMethod(ABC):
    """Base class for secondary-landmark imputation methods over flattened pose vectors"""

    def __init__(self, config: Any = None, logger: Optional[logging.Logger] = None):
        self.config = config
        self.logger = logger or get_logger('baselines')
        self.method_name = self.__class__.__name__.replace('Method', '').lower()
        self.primary_columns: Optional[np.ndarray] = None
        self.secondary_columns: Optional[np.ndarray] = None
        self.failed_queries = 0

    @property
    def fitted(self) -> bool:
        return self.primary_columns is not None

    def fit(self, training: np.ndarray, primary_columns: Sequence[int]) -> 'BaseMethod':
        """
        Learn from fully observed pose vectors

        Args:
            training: (N, D) pose vectors
            primary_columns: Columns holding primary coordinates; the rest are secondary
        """
        training = np.asarray(training, dtype=np.float64)
        if training.ndim != 2 or training.shape[0] == 0:
            raise DataError(f"{self.method_name} needs a non-empty (N, D) training matrix, got {training.shape}")
        if not np.all(np.isfinite(training)):
            raise DataError(f"{self.method_name} training data contains non-finite values")
        columns = np.asarray(primary_columns, dtype=np.int64)
        self.primary_columns = columns
        self.secondary_columns = np.setdiff1d(np.arange(training.shape[1]), columns)
        self.log_debug(f"Fitting on {training.shape[0]} samples of dimension {training.shape[1]}")
        self._fit(training)
        return self

    @abstractmethod
    def _fit(self, training: np.ndarray):
        pass

    def impute(self, primary: np.ndarray) -> np.ndarray:
        """
        Predict secondary coordinates

        Args:
            primary: (Q, Dp) observed primary coordinates

        Returns:
            (Q, Ds) secondary coordinates, ordered as the secondary columns
        """
        if not self.fitted:
            raise DataError(f"{self.method_name} has not been fitted")
        primary = np.atleast_2d(np.asarray(primary, dtype=np.float64))
        if primary.shape[1] != self.primary_columns.shape[0]:
            raise ShapeError(f"Expected {self.primary_columns.shape[0]} primary coordinates, got {primary.shape[1]}",
                             left=primary.shape[1], right=self.primary_columns.shape[0])
        return self._impute(primary)

    @abstractmethod
    def _impute(self, primary: np.ndarray) -> np.ndarray:
        pass

    def log_debug(self, message: str, context: str = ""):
        """Log debug message with method context"""
        if context:
            self.logger.debug(f"[{self.method_name.upper()}] {context}: {message}")
        else:
            self.logger.debug(f"[{self.method_name.upper()}] {message}")

    def log_error(self, message: str, context: str = ""):
        """Log error message with method context"""
        if context:
            self.logger.error(f"[{self.method_name.upper()}] {context}: {message}")
        else:
            self.logger.error(f"[{self.method_name.upper()}] {message}")

    def log_warning(self, message: str, context: str = ""):
        """Log warning message with method context"""
        if context:
            self.logger.warning(f"[{self.method_name.upper()}] {context}: {message}")
        else:
            self.logger.warning(f"[{self.method_name.upper()}] {message}")

    def safe_impute(self, primary: np.ndarray, context: str = "") -> Optional[np.ndarray]:
        """Impute, logging and returning None on a structured failure"""
        try:
            return self.impute(primary)
        except SeclandError as e:
            self.failed_queries += 1
            self.log_error(f"Imputation failed: {e}", context)
            return None
