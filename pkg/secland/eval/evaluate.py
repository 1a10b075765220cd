"""
Model evaluation for SecLand
Runs the detector over annotated frames and scores every view with PCKh
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.model import TrainedModel
from ..geometry import Pose2D
from ..synth.dataset import MultiviewFrame
from ..utils.helpers import chunked
from .pckh import PckhResult, default_thresholds, pckh


def detect_frames(model: TrainedModel, frames: Sequence[MultiviewFrame],
                  batch_size: int = 32) -> List[List[Pose2D]]:
    """Detector poses for every view of every frame"""
    items = [(f, v) for f in frames for v in range(f.num_views)]
    poses: List[Pose2D] = []
    for chunk in chunked(items, batch_size):
        images = np.stack([frame.image(view) for frame, view in chunk])
        poses.extend(model.detect(images).poses())
    result, cursor = [], 0
    for frame in frames:
        result.append(poses[cursor:cursor + frame.num_views])
        cursor += frame.num_views
    return result


def annotated_views(frames: Sequence[MultiviewFrame]) -> List[Tuple[MultiviewFrame, int]]:
    return [(f, v) for f in frames for v in range(f.num_views) if f.poses_2d[v] is not None]


def evaluate_model(model: TrainedModel, frames: Sequence[MultiviewFrame],
                   thresholds: Optional[Sequence[float]] = None, batch_size: int = 32) -> PckhResult:
    """
    PCKh of detector outputs against 2D truth, each annotated view counted as one sample.

    Args:
        model: Trained model
        frames: Frames with 2D truth (test split)
        thresholds: PCKh proportions; defaults to the curve grid
        batch_size: Images per forward pass
    """
    thresholds = tuple(thresholds or default_thresholds())
    views = annotated_views(frames)
    predictions: List[Pose2D] = []
    for chunk in chunked(views, batch_size):
        images = np.stack([frame.image(view) for frame, view in chunk])
        predictions.extend(model.detect(images).poses())
    truths = [frame.poses_2d[view] for frame, view in views]
    names = model.landmark_names or None
    return pckh(predictions, truths, thresholds, model.reference_pair, names,
                frame_ids=[frame.frame_id for frame, _ in views])
