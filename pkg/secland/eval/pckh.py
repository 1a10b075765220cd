"""
PCKh metric for SecLand
Per-landmark keypoint correctness within t times a reference bone length
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import Pose2D
from ..utils.errors import ConfigError, ShapeError
from ..utils.logger import get_logger

logger = get_logger('eval.pckh')

TABLE_THRESHOLDS = (0.25, 0.5, 0.75)
CURVE_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 21))
REFERENCE_EPSILON = 1e-12

RESULT_FIELDS = ('source', 'method', 'mode', 'label_ratio', 'primaries', 'landmark', 'kind', 'threshold',
                 'pckh', 'correct', 'total', 'frames', 'skipped_frames', 'error')


def default_thresholds() -> Tuple[float, ...]:
    """Curve grid 0.05..1.0 merged with the table thresholds"""
    return tuple(sorted(set(CURVE_THRESHOLDS) | set(TABLE_THRESHOLDS)))


@dataclass
class PckhResult:
    """
    Correct counts per (threshold, landmark) over evaluated frames.

    Denominators count only landmarks visible in the truth of non-skipped frames.
    """

    thresholds: Tuple[float, ...]
    landmark_names: List[str]
    num_primary: int
    correct: np.ndarray
    total: np.ndarray
    frames: int = 0
    skipped_frames: int = 0
    reference_pair: Tuple[int, int] = (1, 2)
    frame_ids: List[int] = field(default_factory=list)

    @property
    def rates(self) -> np.ndarray:
        """(T, K) rates, NaN where a landmark was never visible"""
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(self.total > 0, self.correct / np.maximum(self.total, 1), np.nan)

    def _threshold_index(self, t: float) -> int:
        for i, value in enumerate(self.thresholds):
            if abs(value - t) < 1e-9:
                return i
        raise ConfigError(f"Threshold {t} was not evaluated (have {list(self.thresholds)})", threshold=t)

    def rate(self, t: float, landmark: Optional[int] = None) -> float:
        i = self._threshold_index(t)
        if landmark is None:
            return float(np.sum(self.correct[i]) / max(np.sum(self.total), 1))
        return float(self.rates[i, landmark])

    def mean_rate(self, t: float, landmarks: Optional[Sequence[int]] = None) -> float:
        """Mean of per-landmark rates over the given (visible) landmarks"""
        i = self._threshold_index(t)
        indices = range(len(self.landmark_names)) if landmarks is None else landmarks
        values = [self.rates[i, k] for k in indices if self.total[k] > 0]
        return float(np.mean(values)) if values else float('nan')

    @property
    def secondary_indices(self) -> List[int]:
        return list(range(self.num_primary, len(self.landmark_names)))

    @property
    def primary_indices(self) -> List[int]:
        return list(range(self.num_primary))

    def secondary_mean(self, t: float) -> float:
        return self.mean_rate(t, self.secondary_indices)

    def primary_mean(self, t: float) -> float:
        return self.mean_rate(t, self.primary_indices)

    def rows(self, **context: Any) -> List[Dict[str, Any]]:
        """Rows in the shared results schema: one per (landmark, threshold) plus per-kind means"""
        rows = []
        rates = self.rates
        for i, t in enumerate(self.thresholds):
            for k, name in enumerate(self.landmark_names):
                rows.append({
                    **context,
                    'landmark': name,
                    'kind': 'primary' if k < self.num_primary else 'secondary',
                    'threshold': t,
                    'pckh': None if np.isnan(rates[i, k]) else float(rates[i, k]),
                    'correct': int(self.correct[i, k]),
                    'total': int(self.total[k]),
                    'frames': self.frames,
                    'skipped_frames': self.skipped_frames,
                })
            for kind, mean in (('primary', self.primary_mean(t)), ('secondary', self.secondary_mean(t))):
                rows.append({
                    **context,
                    'landmark': f"mean_{kind}",
                    'kind': 'mean',
                    'threshold': t,
                    'pckh': None if np.isnan(mean) else mean,
                    'frames': self.frames,
                    'skipped_frames': self.skipped_frames,
                })
        return rows


def pckh(predictions: Sequence[Pose2D], truths: Sequence[Pose2D], thresholds: Sequence[float] = TABLE_THRESHOLDS,
         reference_pair: Tuple[int, int] = (1, 2), landmark_names: Optional[Sequence[str]] = None,
         frame_ids: Optional[Sequence[int]] = None) -> PckhResult:
    """
    Fraction of landmarks within t * L pixels of the truth, L = |truth[a] - truth[b]| per frame.

    Args:
        predictions: Predicted poses, aligned with truths
        truths: Ground-truth poses with visibility flags
        thresholds: Proportions t (boundary inclusive)
        reference_pair: Stacked landmark indices (a, b) defining L
        landmark_names: Column names; defaults to lm0..lmK-1
        frame_ids: Optional ids recorded for cross-method alignment checks

    Returns:
        PckhResult; frames whose reference landmarks are invisible or coincide are skipped and counted
    """
    if len(predictions) != len(truths):
        raise ShapeError(f"{len(predictions)} predictions for {len(truths)} truths",
                         left=len(predictions), right=len(truths))
    thresholds = tuple(float(t) for t in thresholds)
    if any(t < 0 for t in thresholds):
        raise ConfigError(f"PCKh thresholds must be non-negative, got {list(thresholds)}")

    if truths:
        count = truths[0].num_primary + truths[0].num_secondary
        num_primary = truths[0].num_primary
    else:
        count = len(landmark_names or [])
        num_primary = count
    names = list(landmark_names) if landmark_names is not None else [f"lm{k}" for k in range(count)]
    if len(names) != count:
        raise ShapeError(f"{len(names)} landmark names for {count} landmarks", left=len(names), right=count)

    a, b = reference_pair
    correct = np.zeros((len(thresholds), count), dtype=np.int64)
    total = np.zeros(count, dtype=np.int64)
    frames = skipped = 0
    t_values = np.asarray(thresholds)[:, None]
    for pred, truth in zip(predictions, truths):
        target = truth.stacked()
        visible = truth.visibility()
        if pred.stacked().shape != target.shape:
            raise ShapeError(f"Prediction of shape {pred.stacked().shape} does not match truth {target.shape}")
        if not (visible[a] and visible[b]):
            skipped += 1
            continue
        reference = float(np.linalg.norm(target[a] - target[b]))
        if reference < REFERENCE_EPSILON:
            skipped += 1
            continue
        frames += 1
        distances = np.linalg.norm(pred.stacked() - target, axis=1)
        hits = (distances[None, :] <= t_values * reference) & visible[None, :]
        correct += hits
        total += visible
    if skipped:
        logger.warning(f"PCKh skipped {skipped} frames with an invisible or zero-length reference bone")
    return PckhResult(thresholds, names, num_primary, correct, total, frames, skipped,
                      (int(a), int(b)), list(frame_ids or []))
