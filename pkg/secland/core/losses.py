"""
Training objectives for SecLand
Labeled keypoint loss, multiview reprojection and feature-correlation terms, and their weighted sum
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import Tensor, as_tensor, constant
from ..autodiff import ops
from ..geometry import CameraParams, Pose2D, canonical_frame, project_points, triangulate_points
from ..utils.errors import ConfigError, DegenerateGeometryError, NumericalError, ShapeError
from ..utils.logger import get_logger
from .detector import sample_features
from .predictor import PredictorConfig, predict_secondary

logger = get_logger('core.losses')

NCC_EPSILON = 1e-12
DEFAULT_LAMBDA = 10.0


@dataclass
class LossWeights:
    """Per-term weights; lambda_labeled balances labeled against unlabeled terms"""

    reprojection: float = 1.0
    self_correlation: float = 1.0
    cross_correlation: float = 1.0
    triangulation: float = 1.0
    lambda_labeled: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.lambda_labeled < 0:
            raise ConfigError(f"lambda_labeled must be non-negative, got {self.lambda_labeled}")


def _zero() -> Tensor:
    return constant(0.0)


@dataclass
class LossBreakdown:
    """
    Scalar loss terms for one pair, one labeled item or a whole batch.

    total = w_r (reprojection_i + reprojection_j) - w_s self_correlation
            + w_c cross_correlation + w_t triangulation
            + lambda_labeled (labeled_secondary + labeled_primary)
    """

    reprojection_i: Tensor = field(default_factory=_zero)
    reprojection_j: Tensor = field(default_factory=_zero)
    self_correlation: Tensor = field(default_factory=_zero)
    cross_correlation: Tensor = field(default_factory=_zero)
    triangulation: Tensor = field(default_factory=_zero)
    labeled_secondary: Tensor = field(default_factory=_zero)
    labeled_primary: Tensor = field(default_factory=_zero)
    weights: LossWeights = field(default_factory=LossWeights)
    pairs: int = 0
    skipped_pairs: int = 0

    TERMS = ('reprojection_i', 'reprojection_j', 'self_correlation', 'cross_correlation', 'triangulation',
             'labeled_secondary', 'labeled_primary')

    @property
    def lambda_labeled(self) -> float:
        return self.weights.lambda_labeled

    @property
    def unlabeled(self) -> Tensor:
        w = self.weights
        reprojection = ops.scalar_mul(ops.add(self.reprojection_i, self.reprojection_j), w.reprojection)
        contrastive = ops.sub(ops.scalar_mul(self.cross_correlation, w.cross_correlation),
                              ops.scalar_mul(self.self_correlation, w.self_correlation))
        return ops.add(ops.add(reprojection, contrastive), ops.scalar_mul(self.triangulation, w.triangulation))

    @property
    def labeled(self) -> Tensor:
        return ops.add(self.labeled_secondary, self.labeled_primary)

    @property
    def total(self) -> Tensor:
        return ops.add(self.unlabeled, ops.scalar_mul(self.labeled, self.weights.lambda_labeled))

    def __add__(self, other: 'LossBreakdown') -> 'LossBreakdown':
        terms = {name: ops.add(getattr(self, name), getattr(other, name)) for name in self.TERMS}
        return LossBreakdown(**terms, weights=self.weights, pairs=self.pairs + other.pairs,
                             skipped_pairs=self.skipped_pairs + other.skipped_pairs)

    def with_weights(self, weights: LossWeights) -> 'LossBreakdown':
        terms = {name: getattr(self, name) for name in self.TERMS}
        return LossBreakdown(**terms, weights=weights, pairs=self.pairs, skipped_pairs=self.skipped_pairs)

    def as_row(self) -> Dict[str, Any]:
        row = {name: float(getattr(self, name).item()) for name in self.TERMS}
        row['lambda_labeled'] = self.weights.lambda_labeled
        row['total'] = float(self.total.item())
        row['pairs'] = self.pairs
        row['skipped_pairs'] = self.skipped_pairs
        return row


@dataclass
class ViewObservation:
    """Detector output for one image of a synchronized pair, with its camera"""

    coordinates: Tensor
    features: Tensor
    camera: CameraParams
    stride: int
    num_primary: int

    @property
    def primary(self) -> Tensor:
        return self.coordinates[:self.num_primary]

    @property
    def secondary(self) -> Tensor:
        return self.coordinates[self.num_primary:]

    @property
    def num_secondary(self) -> int:
        return self.coordinates.shape[0] - self.num_primary


# Labeled term

def labeled_terms(detections: Union[Pose2D, Tensor, np.ndarray], truth: Pose2D) -> Tuple[Tensor, Tensor]:
    """
    Squared pixel distances to truth summed over (secondary, primary) landmarks.

    Landmarks flagged invisible in the truth contribute zero.
    """
    if isinstance(detections, Pose2D):
        if detections.num_primary != truth.num_primary:
            raise ShapeError(f"Detections carry {detections.num_primary} primary landmarks, truth carries "
                             f"{truth.num_primary}", left=detections.num_primary, right=truth.num_primary)
        detections = detections.stacked()
    detections = as_tensor(detections)
    target = truth.stacked()
    if detections.shape != target.shape:
        raise ShapeError(f"Detections of shape {detections.shape} do not match truth of shape {target.shape}",
                         left=detections.shape, right=target.shape)
    visible = truth.visibility().astype(np.float64)
    distances = ops.mul(ops.sum(ops.square(ops.sub(detections, target)), axis=-1), visible)
    return ops.sum(distances[truth.num_primary:]), ops.sum(distances[:truth.num_primary])


def labeled_loss(detections: Union[Pose2D, Tensor, np.ndarray], truth: Pose2D) -> Tensor:
    secondary, primary = labeled_terms(detections, truth)
    return ops.add(secondary, primary)


# Correlation terms

def normalized_cross_correlation(a, b, epsilon: float = NCC_EPSILON) -> Tensor:
    """
    dot(a, b) / (|a| |b|) over the last axis; leading axes broadcast.

    A norm product below epsilon is replaced by epsilon and logged.
    """
    a, b = as_tensor(a), as_tensor(b)
    numerator = ops.sum(ops.mul(a, b), axis=-1)
    denominator = ops.mul(ops.l2_norm(a), ops.l2_norm(b))
    small = denominator.values < epsilon
    if np.any(small):
        logger.warning(f"{int(np.sum(small))} near-zero feature norms in normalized cross-correlation; "
                       f"stabilizing with epsilon={epsilon:g}")
        denominator = ops.add(denominator, np.where(small, epsilon, 0.0))
    return ops.div(numerator, denominator)


def within_view_correlation(features: Tensor) -> Tensor:
    """Sum of NCC over ordered landmark pairs k != l of (S, n) features"""
    count = features.shape[0]
    pairwise = normalized_cross_correlation(ops.reshape(features, (count, 1, -1)),
                                            ops.reshape(features, (1, count, -1)))
    return ops.sum(ops.mul(pairwise, 1.0 - np.eye(count)))


# Unlabeled terms

def unlabeled_loss(view_i: ViewObservation, view_j: ViewObservation, predicted: Union[Tensor, np.ndarray],
                   weights: Optional[LossWeights] = None, contrastive: bool = True) -> LossBreakdown:
    """
    Multiview consistency of secondary landmarks for one synchronized pair.

    The within-view term is evaluated on both views and halved, so swapping
    the views leaves every term unchanged.

    Args:
        view_i: First view's detections and features
        view_j: Second view's detections and features
        predicted: (S, 3) world-frame secondary landmarks
        weights: Term weights
        contrastive: Include the feature-correlation terms

    Returns:
        LossBreakdown for the pair
    """
    predicted = as_tensor(predicted)
    if predicted.shape != (view_i.num_secondary, 3) or view_j.num_secondary != view_i.num_secondary:
        raise ShapeError(f"Predicted secondary landmarks of shape {predicted.shape} do not match the "
                         f"{view_i.num_secondary} detected secondary landmarks", left=predicted.shape)
    projected_i = project_points(view_i.camera, predicted)
    projected_j = project_points(view_j.camera, predicted)
    breakdown = LossBreakdown(
        reprojection_i=ops.sum(ops.square(ops.sub(view_i.secondary, projected_i))),
        reprojection_j=ops.sum(ops.square(ops.sub(view_j.secondary, projected_j))),
        weights=weights or LossWeights(),
        pairs=1,
    )
    if contrastive:
        features_i, _ = sample_features(view_i.features, projected_i, view_i.stride, view_i.camera.image_size)
        features_j, _ = sample_features(view_j.features, projected_j, view_j.stride, view_j.camera.image_size)
        breakdown.self_correlation = ops.sum(normalized_cross_correlation(features_i, features_j))
        breakdown.cross_correlation = ops.scalar_mul(
            ops.add(within_view_correlation(features_i), within_view_correlation(features_j)), 0.5)
    return breakdown


def predict_world_secondary(view_i: ViewObservation, view_j: ViewObservation, predictor_params: Dict[str, Any],
                            predictor_config: PredictorConfig, frame_triple: Sequence[int],
                            stop_gradient: bool = False) -> Tensor:
    """
    Triangulate detected primaries, predict in the canonical frame, return (S, 3) world points.

    Raises:
        NumericalError: degenerate triangulation or body frame
    """
    primary_i, primary_j = view_i.primary, view_j.primary
    if stop_gradient:
        primary_i, primary_j = ops.detach(primary_i), ops.detach(primary_j)
    result = triangulate_points(primary_i, primary_j, view_i.camera, view_j.camera)
    if result.any_low_confidence:
        raise DegenerateGeometryError(
            f"Near-parallel rays for {int(result.low_confidence.sum())} primary landmarks",
            first=view_i.camera.name, second=view_j.camera.name)
    frame = canonical_frame(result.points, frame_triple)
    canonical = frame.to_canonical(result.points)
    return frame.to_world(predict_secondary(predictor_params, canonical, predictor_config))


def pair_loss(view_i: ViewObservation, view_j: ViewObservation, predictor_params: Dict[str, Any],
              predictor_config: PredictorConfig, frame_triple: Sequence[int],
              weights: Optional[LossWeights] = None, contrastive: bool = True,
              stop_gradient: bool = False) -> LossBreakdown:
    """Unlabeled loss through the predictor; a degenerate pair contributes zero and is counted as skipped"""
    weights = weights or LossWeights()
    try:
        predicted = predict_world_secondary(view_i, view_j, predictor_params, predictor_config,
                                            frame_triple, stop_gradient)
        return unlabeled_loss(view_i, view_j, predicted, weights, contrastive)
    except NumericalError as e:
        logger.debug(f"Skipping view pair {view_i.camera.name}/{view_j.camera.name}: {e}")
        return LossBreakdown(weights=weights, pairs=1, skipped_pairs=1)


def triangulation_baseline_loss(view_i: ViewObservation, view_j: ViewObservation) -> Tensor:
    """
    Reprojection error of secondary landmarks triangulated straight from the two detections.

    Raises:
        NumericalError: degenerate triangulation
    """
    result = triangulate_points(view_i.secondary, view_j.secondary, view_i.camera, view_j.camera)
    if result.any_low_confidence:
        raise DegenerateGeometryError("Near-parallel rays for secondary landmarks",
                                      first=view_i.camera.name, second=view_j.camera.name)
    residual_i = ops.sub(view_i.secondary, project_points(view_i.camera, result.points))
    residual_j = ops.sub(view_j.secondary, project_points(view_j.camera, result.points))
    return ops.add(ops.sum(ops.square(residual_i)), ops.sum(ops.square(residual_j)))


def triangulation_pair_loss(view_i: ViewObservation, view_j: ViewObservation,
                            weights: Optional[LossWeights] = None) -> LossBreakdown:
    weights = weights or LossWeights()
    try:
        return LossBreakdown(triangulation=triangulation_baseline_loss(view_i, view_j), weights=weights, pairs=1)
    except NumericalError as e:
        logger.debug(f"Skipping view pair {view_i.camera.name}/{view_j.camera.name}: {e}")
        return LossBreakdown(weights=weights, pairs=1, skipped_pairs=1)


# Combined objective

def total_objective(labeled: Sequence[Tuple[Union[Pose2D, Tensor, np.ndarray], Pose2D]],
                    unlabeled: Sequence[LossBreakdown], lambda_labeled: float = DEFAULT_LAMBDA,
                    weights: Optional[LossWeights] = None) -> LossBreakdown:
    """
    Sum labeled items and unlabeled pair breakdowns into one objective.

    Args:
        labeled: (detections, truth) per labeled image
        unlabeled: Per-pair breakdowns from pair_loss or triangulation_pair_loss
        lambda_labeled: Weight of the labeled terms (>= 0)
        weights: Remaining term weights; lambda_labeled overrides its field

    Returns:
        Aggregated LossBreakdown; `.total` is the differentiable objective
    """
    if lambda_labeled < 0:
        raise ConfigError(f"lambda_labeled must be non-negative, got {lambda_labeled}")
    base = weights or LossWeights()
    weights = LossWeights(**{**asdict(base), 'lambda_labeled': float(lambda_labeled)})
    combined = LossBreakdown(weights=weights)
    for detections, truth in labeled:
        secondary, primary = labeled_terms(detections, truth)
        combined = combined + LossBreakdown(labeled_secondary=secondary, labeled_primary=primary, weights=weights)
    for breakdown in unlabeled:
        combined = combined + breakdown.with_weights(weights)
    return combined
