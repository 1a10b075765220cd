"""
Camera model for SecLand
Pinhole projection, camera rig files and basic rig geometry
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from ..autodiff import Tensor, as_tensor
from ..autodiff import ops
from ..utils.errors import ConfigError, DataError, DegenerateProjectionError

DEPTH_EPSILON = 1e-9


@dataclass
class CameraParams:
    """Pre-calibrated camera: intrinsics K, world-to-camera rotation R, translation t"""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int
    name: str = field(default='cam')

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.width = int(self.width)
        self.height = int(self.height)
        self.validate()

    def validate(self, tolerance: float = 1e-9):
        if not np.allclose(self.R @ self.R.T, np.eye(3), atol=tolerance) or abs(np.linalg.det(self.R) - 1.0) > tolerance:
            raise ConfigError(f"Camera {self.name}: R is not a proper rotation", camera=self.name)
        if np.any(np.abs(np.tril(self.K, -1)) > 0) or self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ConfigError(f"Camera {self.name}: K must be upper-triangular with positive focal lengths",
                              camera=self.name)
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"Camera {self.name}: image size must be positive", camera=self.name)

    @property
    def image_size(self):
        return self.width, self.height

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates"""
        return -self.R.T @ self.t

    @property
    def projection_matrix(self) -> np.ndarray:
        return self.K @ np.hstack([self.R, self.t[:, None]])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'K': self.K.reshape(-1).tolist(),
            'R': self.R.reshape(-1).tolist(),
            't': self.t.tolist(),
            'width': self.width,
            'height': self.height,
        }

    @classmethod
    def from_dict(cls, entry: Dict[str, Any]) -> 'CameraParams':
        try:
            return cls(K=entry['K'], R=entry['R'], t=entry['t'],
                       width=entry['width'], height=entry['height'], name=entry.get('name', 'cam'))
        except KeyError as e:
            raise DataError(f"Camera entry is missing field {e}", field=str(e))


def project_points(camera: CameraParams, points: Union[Tensor, np.ndarray]) -> Tensor:
    """
    Pinhole projection of (K, 3) world points to (K, 2) pixels.

    Differentiable with respect to the points.
    """
    points = as_tensor(points)
    flat = ops.reshape(points, (-1, 3))
    cam_points = ops.add(ops.matmul(flat, camera.R.T), camera.t)
    depth = cam_points.values[:, 2]
    if np.any(np.abs(depth) <= DEPTH_EPSILON):
        raise DegenerateProjectionError(f"Point on the plane of camera {camera.name} (|depth| <= {DEPTH_EPSILON})",
                                        camera=camera.name, min_depth=float(np.min(np.abs(depth))))
    homogeneous = ops.matmul(cam_points, camera.K.T)
    pixels = ops.div(homogeneous[:, 0:2], homogeneous[:, 2:3])
    return ops.reshape(pixels, points.shape[:-1] + (2,))


def project(camera: CameraParams, point: np.ndarray) -> np.ndarray:
    """Project world points (..., 3) to pixels (..., 2)"""
    return project_points(camera, np.asarray(point, dtype=np.float64)).numpy()


def depths(camera: CameraParams, points: np.ndarray) -> np.ndarray:
    """Camera-frame depth of world points"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points @ camera.R[2] + camera.t[2]


def baseline_angle(first: CameraParams, second: CameraParams, target: Sequence[float] = (0.0, 0.0, 0.0)) -> float:
    """Angle in degrees between the rays from each camera center to a target point"""
    target = np.asarray(target, dtype=np.float64)
    a = target - first.center
    b = target - second.center
    cosine = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))


def save_rig(path, cameras: List[CameraParams]) -> Path:
    """Write a camera rig file: JSON array of {name, K, R, t, width, height}"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump([cam.to_dict() for cam in cameras], f, indent=2)
    return path


def load_rig(path) -> List[CameraParams]:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            entries = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read camera rig {path}: {e}", path=str(path))
    if not isinstance(entries, list):
        raise DataError(f"Camera rig {path} must be a JSON array", path=str(path))
    return [CameraParams.from_dict(entry) for entry in entries]
