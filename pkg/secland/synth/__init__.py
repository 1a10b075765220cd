"""
Synthetic multiview capture simulator for SecLand
"""

from .skeleton import (
    PoseModel, PoseModelConfig, SkeletonSpec, build_pose_model, default_skeleton, forward_kinematics, sample_pose,
)
from .rig import RigConfig, build_rig, look_at, rig_from_config
from .render import RenderConfig, landmark_colors, perturb_keypoints, render, render_views
from .dataset import (
    LABELED_PRIMARY, LABELED_SECONDARY, SPLITS, TEST, UNLABELED,
    Dataset, DatasetSplit, DatasetWriter, GenerateConfig, MultiviewFrame, apply_split, assign_splits,
    frame_pose_3d, frame_records, generate_dataset, generate_frame, generate_frames, load_dataset, make_splits,
    restrict_labels, validate_record, write_frames,
)

__all__ = [
    'LABELED_PRIMARY', 'LABELED_SECONDARY', 'SPLITS', 'TEST', 'UNLABELED',
    'Dataset', 'DatasetSplit', 'DatasetWriter', 'GenerateConfig', 'MultiviewFrame', 'PoseModel',
    'PoseModelConfig', 'RenderConfig', 'RigConfig', 'SkeletonSpec', 'apply_split', 'assign_splits',
    'build_pose_model', 'build_rig', 'default_skeleton', 'forward_kinematics', 'frame_pose_3d', 'frame_records',
    'generate_dataset', 'generate_frame', 'generate_frames', 'landmark_colors', 'load_dataset', 'look_at',
    'make_splits', 'perturb_keypoints', 'render', 'render_views', 'restrict_labels', 'rig_from_config', 'sample_pose',
    'validate_record', 'write_frames',
]
