"""
Baseline evaluation for SecLand
Fits imputation methods on labeled poses and scores their secondary landmarks with the shared PCKh harness
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..eval.evaluate import annotated_views
from ..eval.pckh import TABLE_THRESHOLDS, PckhResult, pckh
from ..geometry import Pose2D, Pose3D, canonical_frame, normalize_points_2d, normalize_pose, project, triangulate_dlt
from ..synth.dataset import DatasetSplit, MultiviewFrame
from ..synth.skeleton import SkeletonSpec
from ..utils.errors import ConfigError, EmptyDatasetError, NumericalError
from ..utils.logger import get_logger
from .base import BaseMethod

logger = get_logger('baselines.evaluate')

MODES = ('2d', '3d')
PRIMARY_SOURCES = ('truth', 'detected')
# Secondary coordinates reported for a query whose primaries cannot be normalized
FAILED_PIXEL = -1.0e6


@dataclass
class BaselineData:
    vectors: np.ndarray
    primary_columns: np.ndarray
    mode: str


def _primary_columns(num_primary: int, dim: int) -> np.ndarray:
    return np.arange(num_primary * dim)


def training_vectors(split: DatasetSplit, skeleton: SkeletonSpec, mode: str) -> BaselineData:
    """
    Flattened canonical poses of the labeled-secondary frames.

    3D mode triangulates views 0 and 1 and normalizes in the body frame; 2D mode
    normalizes every labeled view in its image plane.
    """
    if mode not in MODES:
        raise ConfigError(f"Unknown baseline mode '{mode}' (choose from {', '.join(MODES)})", mode=mode)
    vectors = []
    for frame in split.labeled_secondary:
        try:
            if mode == '3d':
                first, second = frame.poses_2d[0], frame.poses_2d[1]
                if first is None or second is None:
                    continue
                world = triangulate_dlt(first.stacked(), second.stacked(), split.cameras[0], split.cameras[1])
                canonical, _ = normalize_pose(Pose3D.from_stacked(world, skeleton.num_primary), skeleton.frame_triple)
                vectors.append(canonical.vector())
            else:
                for pose in frame.poses_2d:
                    if pose is not None:
                        points, _ = normalize_points_2d(pose.stacked(), skeleton.frame_triple)
                        vectors.append(points.reshape(-1))
        except NumericalError as e:
            logger.debug(f"Frame {frame.frame_id} left out of {mode} baseline training: {e}")
    if not vectors:
        raise EmptyDatasetError(f"No labeled-secondary pose available for {mode} baselines")
    dim = 3 if mode == '3d' else 2
    return BaselineData(np.stack(vectors), _primary_columns(skeleton.num_primary, dim), mode)


def _with_secondary(primary_pose: Pose2D, truth: Pose2D, secondary: np.ndarray) -> Pose2D:
    return Pose2D(primary_pose.primary, secondary, truth.primary_visible, truth.secondary_visible)


def _failed(pose: Pose2D, truth: Pose2D) -> Pose2D:
    return _with_secondary(pose, truth, np.full((truth.num_secondary, 2), FAILED_PIXEL))


def impute_frame_3d(method: BaseMethod, frame: MultiviewFrame, primaries: Sequence[Pose2D],
                    split: DatasetSplit, skeleton: SkeletonSpec) -> List[Pose2D]:
    """Triangulate primaries from views 0/1, impute in the body frame, project into every view"""
    truths = frame.poses_2d
    try:
        world = triangulate_dlt(primaries[0].primary, primaries[1].primary, split.cameras[0], split.cameras[1])
        transform = canonical_frame(world, skeleton.frame_triple).transform()
        imputed = method.safe_impute(transform.apply(world).reshape(1, -1), f"frame {frame.frame_id}")
        if imputed is None:
            return [_failed(p, t) for p, t in zip(primaries, truths)]
        secondary = imputed[0]
        secondary_world = transform.invert(secondary.reshape(-1, 3))
        projected = [project(split.cameras[v], secondary_world) for v in range(len(primaries))]
    except NumericalError as e:
        logger.debug(f"Frame {frame.frame_id}: 3D query failed: {e}")
        return [_failed(p, t) for p, t in zip(primaries, truths)]
    return [_with_secondary(p, t, z) for p, t, z in zip(primaries, truths, projected)]


def impute_frame_2d(method: BaseMethod, frame: MultiviewFrame, primaries: Sequence[Pose2D],
                    skeleton: SkeletonSpec) -> List[Pose2D]:
    """Impute every view independently in its normalized image plane"""
    poses = []
    for pose, truth in zip(primaries, frame.poses_2d):
        try:
            points, transform = normalize_points_2d(pose.primary, skeleton.frame_triple)
            imputed = method.safe_impute(points.reshape(1, -1), f"frame {frame.frame_id}")
            if imputed is None:
                poses.append(_failed(pose, truth))
                continue
            poses.append(_with_secondary(pose, truth, transform.invert(imputed[0].reshape(-1, 2))))
        except NumericalError as e:
            logger.debug(f"Frame {frame.frame_id}: 2D query failed: {e}")
            poses.append(_failed(pose, truth))
    return poses


def evaluate_method(method: BaseMethod, mode: str, split: DatasetSplit, skeleton: SkeletonSpec,
                    detections: Optional[Sequence[Sequence[Pose2D]]] = None,
                    thresholds: Sequence[float] = TABLE_THRESHOLDS) -> PckhResult:
    """
    Score a fitted method on the test frames.

    Args:
        method: Method fitted on vectors from training_vectors(split, skeleton, mode)
        mode: '2d' or '3d'
        split: Split whose test frames carry 2D truth
        skeleton: Landmark layout
        detections: Per-frame per-view detector poses; None uses ground-truth primaries
        thresholds: PCKh proportions

    Returns:
        PckhResult over the same (frame, view) samples the detector is scored on
    """
    frames = [f for f in split.test if f.has_primary_labels]
    if not frames:
        raise EmptyDatasetError("No annotated test frames to evaluate baselines on")
    predictions: List[Pose2D] = []
    by_frame = {f.frame_id: i for i, f in enumerate(split.test)}
    for frame in frames:
        primaries = frame.poses_2d if detections is None else detections[by_frame[frame.frame_id]]
        if mode == '3d':
            predictions.extend(impute_frame_3d(method, frame, primaries, split, skeleton))
        else:
            predictions.extend(impute_frame_2d(method, frame, primaries, skeleton))
    if method.failed_queries:
        method.log_warning(f"{method.failed_queries} queries failed and were scored as misses", mode)
    views = annotated_views(frames)
    truths = [frame.poses_2d[view] for frame, view in views]
    return pckh(predictions, truths, thresholds, skeleton.reference_pair, skeleton.names,
                frame_ids=[frame.frame_id for frame, _ in views])


def run_baselines(split: DatasetSplit, skeleton: SkeletonSpec, methods: Sequence[str],
                  modes: Sequence[str] = MODES, configs: Optional[Dict[str, Any]] = None,
                  detections: Optional[Sequence[Sequence[Pose2D]]] = None,
                  thresholds: Sequence[float] = TABLE_THRESHOLDS, threads: int = 1,
                  show_progress: bool = False) -> List[Dict[str, Any]]:
    """
    Fit and score every (method, mode) pair; each is evaluated with ground-truth primaries and,
    when detections are given, with detected primaries.

    Returns:
        Rows in the shared results schema; a failing pair becomes an error row
    """
    from ..core.runner import JobRunner
    from ..core.trainer import effective_label_ratio
    from . import get_method

    configs = configs or {}
    training: Dict[str, BaselineData] = {}

    def job(name: str, mode: str):
        def run() -> List[Tuple[str, PckhResult]]:
            data = training[mode]
            method = get_method(name)(configs.get(name)).fit(data.vectors, data.primary_columns)
            results = [('truth', evaluate_method(method, mode, split, skeleton, None, thresholds))]
            if detections is not None:
                results.append(('detected', evaluate_method(method, mode, split, skeleton, detections, thresholds)))
            return results
        return run

    pairs = [(name, mode) for name in methods for mode in modes]
    for name, mode in pairs:
        if get_method(name) is None:
            raise ConfigError(f"Unknown baseline method '{name}'", method=name)
        if mode not in MODES:
            raise ConfigError(f"Unknown baseline mode '{mode}' (choose from {', '.join(MODES)})", mode=mode)
    # Training sets are built up front so worker threads only read them
    for mode in sorted(set(modes)):
        training[mode] = training_vectors(split, skeleton, mode)

    jobs = [(f"{name}:{mode}", job(name, mode)) for name, mode in pairs]
    outcomes = JobRunner(threads, logger, "Evaluating baselines...").run(jobs, show_progress)

    ratio = effective_label_ratio(split)
    rows: List[Dict[str, Any]] = []
    for (name, mode), outcome in zip(pairs, outcomes):
        context = {'source': 'baselines', 'method': name, 'mode': mode, 'label_ratio': ratio}
        if not outcome.ok:
            rows.append({**context, 'primaries': 'truth', 'error': outcome.error})
            continue
        for primaries, result in outcome.value:
            rows.extend(result.rows(**context, primaries=primaries))
    return rows
