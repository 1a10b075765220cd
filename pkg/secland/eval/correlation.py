"""
Feature correlation statistics for SecLand
Same-landmark cross-view versus different-landmark within-view correlations of detector features
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.detector import sample_features
from ..core.losses import normalized_cross_correlation, predict_world_secondary
from ..core.model import TrainedModel
from ..geometry import CameraParams, project_points
from ..synth.dataset import MultiviewFrame
from ..utils.errors import DataError, NumericalError
from ..utils.logger import get_logger

logger = get_logger('eval.correlation')

CORRELATION_FIELDS = ('frame', 'view_i', 'view_j', 'kind', 'landmark_a', 'landmark_b', 'correlation')


@dataclass
class CorrelationStats:
    self_correlations: np.ndarray
    cross_correlations: np.ndarray
    records: List[Dict[str, Any]] = field(default_factory=list)
    skipped_pairs: int = 0

    @property
    def self_mean(self) -> float:
        return float(np.mean(self.self_correlations)) if self.self_correlations.size else float('nan')

    @property
    def cross_mean(self) -> float:
        return float(np.mean(self.cross_correlations)) if self.cross_correlations.size else float('nan')

    @property
    def gap(self) -> float:
        return self.self_mean - self.cross_mean

    def summary(self) -> Dict[str, Any]:
        return {
            'self_mean': self.self_mean,
            'cross_mean': self.cross_mean,
            'gap': self.gap,
            'self_count': int(self.self_correlations.size),
            'cross_count': int(self.cross_correlations.size),
            'skipped_pairs': self.skipped_pairs,
        }


def correlations_from_features(features_i: np.ndarray, features_j: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Correlations for one view pair from (S, n) sampled features.

    Returns:
        (S self correlations across views, cross correlations over unordered k < l pairs in both views)
    """
    features_i = np.asarray(features_i, dtype=np.float64)
    features_j = np.asarray(features_j, dtype=np.float64)
    self_values = normalized_cross_correlation(features_i, features_j).numpy()
    upper = np.triu_indices(features_i.shape[0], k=1)
    cross = []
    for features in (features_i, features_j):
        matrix = normalized_cross_correlation(features[:, None, :], features[None, :, :]).numpy()
        cross.append(matrix[upper])
    return self_values, np.concatenate(cross)


def correlation_stats(model: TrainedModel, frames: Sequence[MultiviewFrame], cameras: Sequence[CameraParams],
                      views: Tuple[int, int] = (0, 1), limit: Optional[int] = None) -> CorrelationStats:
    """
    Sample feature correlations at projected predicted secondary landmarks.

    Args:
        model: Trained detector and predictor
        frames: Multiview frames (truth not needed)
        cameras: Rig
        views: View pair evaluated in every frame
        limit: Evaluate at most this many frames

    Raises:
        DataError: no frame produced a valid pair
    """
    i, j = views
    names = model.landmark_names[model.detector.num_primary:] or \
        [f"lm{k}" for k in range(model.detector.num_secondary)]
    self_all, cross_all, records = [], [], []
    skipped = 0
    upper = np.triu_indices(model.detector.num_secondary, k=1)
    for frame in list(frames)[:limit]:
        if frame.num_views <= max(i, j):
            skipped += 1
            continue
        view_i, view_j = model.observe(frame.stacked_images((i, j)), (cameras[i], cameras[j]))
        try:
            predicted = predict_world_secondary(view_i, view_j, model.params, model.predictor, model.frame_triple)
            sampled_i, _ = sample_features(view_i.features, project_points(cameras[i], predicted), view_i.stride,
                                           cameras[i].image_size)
            sampled_j, _ = sample_features(view_j.features, project_points(cameras[j], predicted), view_j.stride,
                                           cameras[j].image_size)
        except NumericalError as e:
            logger.debug(f"Frame {frame.frame_id}: skipping pair ({i}, {j}): {e}")
            skipped += 1
            continue
        self_values, cross_values = correlations_from_features(sampled_i.numpy(), sampled_j.numpy())
        self_all.append(self_values)
        cross_all.append(cross_values)
        for k, value in enumerate(self_values):
            records.append({'frame': frame.frame_id, 'view_i': i, 'view_j': j, 'kind': 'self',
                            'landmark_a': names[k], 'landmark_b': names[k], 'correlation': float(value)})
        half = len(cross_values) // 2
        for offset, view in ((0, i), (half, j)):
            for n, (a, b) in enumerate(zip(*upper)):
                records.append({'frame': frame.frame_id, 'view_i': view, 'view_j': view, 'kind': 'cross',
                                'landmark_a': names[a], 'landmark_b': names[b],
                                'correlation': float(cross_values[offset + n])})
    if not self_all:
        raise DataError("No frame yielded a valid view pair for correlation statistics", skipped=skipped)
    if skipped:
        logger.warning(f"Correlation statistics skipped {skipped} degenerate view pairs")
    return CorrelationStats(np.concatenate(self_all), np.concatenate(cross_all), records, skipped)
