"""
Two-view triangulation for SecLand
Differentiable direct linear transform plus an optional nonlinear refinement
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import least_squares

from ..autodiff import Tensor, as_tensor
from ..autodiff import ops
from ..utils.errors import DegenerateGeometryError
from ..utils.logger import get_logger
from .camera import CameraParams, project

logger = get_logger('geometry.triangulation')

BASELINE_EPSILON = 1e-9
CONDITION_LIMIT = 1e8


@dataclass
class TriangulationResult:
    """Triangulated points with per-point conditioning of the DLT design matrix"""

    points: Tensor
    condition: np.ndarray
    low_confidence: np.ndarray

    @property
    def any_low_confidence(self) -> bool:
        return bool(np.any(self.low_confidence))


def _check_pair(first: CameraParams, second: CameraParams):
    baseline = float(np.linalg.norm(first.center - second.center))
    if baseline < BASELINE_EPSILON:
        raise DegenerateGeometryError(
            f"Cameras {first.name} and {second.name} share a center (baseline {baseline:.3g})",
            first=first.name, second=second.name, baseline=baseline)


def _view_rows(z: Tensor, camera: CameraParams):
    P = camera.projection_matrix
    u = z[:, 0:1]
    v = z[:, 1:2]
    rows = [
        ops.sub(ops.mul(u, P[2, :3]), P[0, :3]),
        ops.sub(ops.mul(v, P[2, :3]), P[1, :3]),
    ]
    rhs = [
        ops.sub(P[0, 3], ops.mul(u, P[2, 3])),
        ops.sub(P[1, 3], ops.mul(v, P[2, 3])),
    ]
    return rows, rhs


def _conditioning(design: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(design, axis=2, keepdims=True)
    scaled = design / np.where(norms > 0, norms, 1.0)
    singular = np.linalg.svd(scaled, compute_uv=False)
    smallest = singular[:, -1]
    with np.errstate(divide='ignore'):
        return np.where(smallest > 0, singular[:, 0] / np.where(smallest > 0, smallest, 1.0), np.inf)


def triangulate_points(z_i: Union[Tensor, np.ndarray], z_j: Union[Tensor, np.ndarray],
                       camera_i: CameraParams, camera_j: CameraParams) -> TriangulationResult:
    """
    Linear two-view triangulation of K correspondences.

    Each view contributes two rows of the inhomogeneous DLT system A X = b;
    X solves the normal equations, so gradients flow back to both sets of
    2D observations.

    Args:
        z_i: (K, 2) pixels in the first view
        z_j: (K, 2) pixels in the second view
        camera_i: First camera
        camera_j: Second camera

    Returns:
        TriangulationResult with (K, 3) world points
    """
    _check_pair(camera_i, camera_j)
    z_i = ops.reshape(as_tensor(z_i), (-1, 2))
    z_j = ops.reshape(as_tensor(z_j), (-1, 2))

    rows_i, rhs_i = _view_rows(z_i, camera_i)
    rows_j, rhs_j = _view_rows(z_j, camera_j)
    design = ops.stack(rows_i + rows_j, axis=1)
    target = ops.stack(rhs_i + rhs_j, axis=1)

    design_t = ops.transpose(design, (0, 2, 1))
    normal = ops.matmul(design_t, design)
    moment = ops.matmul(design_t, target)
    points = ops.reshape(ops.solve(normal, moment), (-1, 3))

    condition = _conditioning(design.values)
    low_confidence = condition > CONDITION_LIMIT
    if np.any(low_confidence):
        logger.debug(f"{int(low_confidence.sum())} near-parallel ray pairs between "
                     f"{camera_i.name} and {camera_j.name}")
    return TriangulationResult(points, condition, low_confidence)


def triangulate_dlt(z_i: np.ndarray, z_j: np.ndarray, camera_i: CameraParams,
                    camera_j: CameraParams) -> np.ndarray:
    """Triangulate (..., 2) correspondences to (..., 3) world points"""
    z_i = np.asarray(z_i, dtype=np.float64)
    result = triangulate_points(z_i, z_j, camera_i, camera_j)
    return result.points.numpy().reshape(z_i.shape[:-1] + (3,))


def refine_triangulation(z_i: np.ndarray, z_j: np.ndarray, camera_i: CameraParams,
                         camera_j: CameraParams, initial: np.ndarray = None) -> np.ndarray:
    """
    Minimize the two-view reprojection error of each point (Levenberg-Marquardt), seeded by DLT.
    """
    z_i = np.asarray(z_i, dtype=np.float64).reshape(-1, 2)
    z_j = np.asarray(z_j, dtype=np.float64).reshape(-1, 2)
    if initial is None:
        initial = triangulate_dlt(z_i, z_j, camera_i, camera_j)
    initial = np.asarray(initial, dtype=np.float64).reshape(-1, 3)

    refined = np.empty_like(initial)
    for k in range(initial.shape[0]):
        def residual(X, k=k):
            return np.concatenate([project(camera_i, X) - z_i[k], project(camera_j, X) - z_j[k]])

        solution = least_squares(residual, initial[k], method='lm', xtol=1e-12, ftol=1e-12, gtol=1e-12)
        refined[k] = solution.x
    return refined
