"""
Multiview geometry for SecLand
Camera projection, two-view triangulation and pose normalization
"""

from .camera import CameraParams, baseline_angle, depths, load_rig, project, project_points, save_rig
from .pose import Pose2D, Pose3D
from .triangulation import TriangulationResult, refine_triangulation, triangulate_dlt, triangulate_points
from .normalization import (
    CanonicalFrame, SimilarityTransform, apply_transform, canonical_frame, denormalize_points,
    invert_transform, normalize_points_2d, normalize_pose, procrustes_align,
)

__all__ = [
    'CameraParams', 'CanonicalFrame', 'Pose2D', 'Pose3D', 'SimilarityTransform', 'TriangulationResult',
    'apply_transform', 'baseline_angle', 'canonical_frame', 'denormalize_points', 'depths',
    'invert_transform', 'load_rig', 'normalize_points_2d', 'normalize_pose', 'procrustes_align',
    'project', 'project_points', 'refine_triangulation', 'save_rig', 'triangulate_dlt',
    'triangulate_points',
]
