"""
Camera ring builder for SecLand
Places calibrated pinhole cameras on a circle around the subject
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..geometry import CameraParams
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError


@dataclass
class RigConfig:
    num_cameras: int = 4
    radius: float = 4.5
    height: float = 0.4
    image_size: int = 64
    focal: float = 110.0
    arc_degrees: float = 360.0
    start_degrees: float = 45.0

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'RigConfig':
        return section_from_dict(cls, entry, 'rig')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def look_at(center: Sequence[float], target: Sequence[float] = (0.0, 0.0, 0.0),
            up: Sequence[float] = (0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation with +z toward the target and image y pointing down"""
    center = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - center
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ConfigError("Camera center coincides with its target")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-12:
        raise ConfigError("Camera viewing direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    # re-orthonormalize through scipy so det(R) is 1 to machine precision
    return Rotation.from_matrix(np.vstack([right, down, forward])).as_matrix()


def ring_angles(num_cameras: int, arc_degrees: float = 360.0, start_degrees: float = 0.0) -> np.ndarray:
    """
    Azimuths in degrees: evenly spaced around the full circle, or spread
    end-to-end over a partial arc centered on start_degrees.
    """
    if arc_degrees >= 360.0:
        return start_degrees + 360.0 * np.arange(num_cameras) / num_cameras
    return start_degrees - arc_degrees / 2.0 + arc_degrees * np.arange(num_cameras) / (num_cameras - 1)


def build_rig(num_cameras: int = 4, radius: float = 4.5, height: float = 0.4, image_size: int = 64,
              focal: float = 110.0, arc_degrees: float = 360.0, start_degrees: float = 45.0) -> List[CameraParams]:
    """
    Build a ring of cameras aimed at the world origin.

    Args:
        num_cameras: Camera count C (at least 2)
        radius: Ring radius in world units
        height: Camera height above the ground plane through the origin
        image_size: Square image side in pixels
        focal: Focal length in pixels
        arc_degrees: 360 for an evenly spaced ring, less for a partial arc
        start_degrees: Azimuth of the first camera (ring) or of the arc center

    Returns:
        List of CameraParams named cam0..cam{C-1}
    """
    if num_cameras < 2:
        raise ConfigError(f"A rig needs at least 2 cameras, got {num_cameras}", num_cameras=num_cameras)
    if radius <= 0 or focal <= 0 or image_size <= 0:
        raise ConfigError("Rig radius, focal length and image size must be positive")

    principal = (image_size - 1) / 2.0
    K = np.array([[focal, 0.0, principal], [0.0, focal, principal], [0.0, 0.0, 1.0]])
    cameras = []
    for c, azimuth in enumerate(np.radians(ring_angles(num_cameras, arc_degrees, start_degrees))):
        center = np.array([radius * np.cos(azimuth), radius * np.sin(azimuth), height])
        R = look_at(center)
        cameras.append(CameraParams(K=K, R=R, t=-R @ center, width=image_size, height=image_size, name=f'cam{c}'))
    return cameras


def rig_from_config(config: RigConfig) -> List[CameraParams]:
    return build_rig(config.num_cameras, config.radius, config.height, config.image_size,
                     config.focal, config.arc_degrees, config.start_degrees)
