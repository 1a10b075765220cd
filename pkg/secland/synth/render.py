"""
Toy image renderer for SecLand
Gaussian landmark blobs with per-landmark colour signatures, faint bones and sensor noise
"""

import colorsys
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import CameraParams, Pose2D, Pose3D, depths
from ..utils.config import section_from_dict

DEPTH_EPSILON = 1e-9


@dataclass
class RenderConfig:
    blob_sigma: float = 1.5
    blob_gain: float = 1.0
    color_jitter: float = 0.05
    bone_intensity: float = 0.15
    bone_width: float = 0.6
    background: float = 0.05
    noise_std: float = 0.02
    keypoint_noise: float = 0.0

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'RenderConfig':
        return section_from_dict(cls, entry, 'render')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def noiseless(cls) -> 'RenderConfig':
        return cls(color_jitter=0.0, bone_intensity=0.0, background=0.0, noise_std=0.0)


def landmark_colors(count: int) -> np.ndarray:
    """Fixed, well-separated RGB signature per landmark (golden-ratio hue walk)"""
    colors = []
    for k in range(count):
        hue = (k * 0.618033988749895) % 1.0
        value = 1.0 if k % 2 == 0 else 0.75
        colors.append(colorsys.hsv_to_rgb(hue, 0.85, value))
    return np.asarray(colors, dtype=np.float64)


def _segment_distance(grid: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    direction = end - start
    length_sq = float(direction @ direction)
    if length_sq == 0.0:
        return np.linalg.norm(grid - start, axis=-1)
    s = np.clip(((grid - start) @ direction) / length_sq, 0.0, 1.0)
    return np.linalg.norm(grid - (start + s[..., None] * direction), axis=-1)


def render(pose: Pose3D, camera: CameraParams, config: Optional[RenderConfig] = None,
           seed=None, bones: Sequence[Tuple[int, int]] = ()) -> Tuple[np.ndarray, Pose2D]:
    """
    Render one view of a pose.

    Blob size is fixed in pixels regardless of depth.

    Args:
        pose: World pose
        camera: Viewing camera
        config: Blob, bone and noise settings
        seed: Seed for colour jitter and sensor noise
        bones: (parent, child) landmark index pairs to draw as faint segments

    Returns:
        (image of shape (3, H, W), exact 2D truth with visibility flags)
    """
    config = config or RenderConfig()
    rng = np.random.default_rng(seed)
    points = pose.stacked()
    count = points.shape[0]

    in_front = depths(camera, points) > DEPTH_EPSILON
    pixels = np.zeros((count, 2))
    if np.any(in_front):
        cam_points = points[in_front] @ camera.R.T + camera.t
        homogeneous = cam_points @ camera.K.T
        pixels[in_front] = homogeneous[:, :2] / homogeneous[:, 2:3]
    inside = (pixels[:, 0] >= 0) & (pixels[:, 0] <= camera.width - 1) & \
             (pixels[:, 1] >= 0) & (pixels[:, 1] <= camera.height - 1)
    visible = in_front & inside

    ys, xs = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)
    grid = np.stack([xs, ys], axis=-1)
    image = np.full((3, camera.height, camera.width), config.background)

    if config.bone_intensity > 0:
        for parent, child in bones:
            if in_front[parent] and in_front[child]:
                d = _segment_distance(grid, pixels[parent], pixels[child])
                image += config.bone_intensity * np.exp(-d ** 2 / (2.0 * config.bone_width ** 2))

    colors = landmark_colors(count)
    jitter = rng.normal(0.0, config.color_jitter, size=colors.shape) if config.color_jitter > 0 else 0.0
    colors = np.clip(colors + jitter, 0.0, 1.0)
    for k in np.flatnonzero(in_front):
        d_sq = np.sum((grid - pixels[k]) ** 2, axis=-1)
        blob = config.blob_gain * np.exp(-d_sq / (2.0 * config.blob_sigma ** 2))
        image += colors[k][:, None, None] * blob[None]

    if config.noise_std > 0:
        image += rng.normal(0.0, config.noise_std, size=image.shape)
    image = np.clip(image, 0.0, 1.0)

    truth = Pose2D.from_stacked(pixels, pose.num_primary, visible)
    return image, truth


def perturb_keypoints(pose: Pose2D, noise_std: float, seed=None) -> Pose2D:
    """Simulated detector output: truth plus isotropic pixel noise"""
    if noise_std <= 0:
        return pose
    rng = np.random.default_rng(seed)
    noisy = pose.stacked() + rng.normal(0.0, noise_std, size=(pose.num_primary + pose.num_secondary, 2))
    return Pose2D.from_stacked(noisy, pose.num_primary, pose.visibility())


def render_views(pose: Pose3D, cameras: List[CameraParams], config: Optional[RenderConfig] = None,
                 seed=None, bones: Sequence[Tuple[int, int]] = ()) -> Tuple[List[np.ndarray], List[Pose2D]]:
    """Render every camera of a rig with independent per-view noise streams"""
    sequence = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    images, truths = [], []
    for camera, child in zip(cameras, sequence.spawn(len(cameras))):
        image, truth = render(pose, camera, config, child, bones)
        images.append(image)
        truths.append(truth)
    return images, truths
