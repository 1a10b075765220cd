"""
Pose normalization for SecLand
Canonical body frame from designated limbs, similarity transforms and Procrustes alignment
"""

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from ..autodiff import Tensor, as_tensor
from ..autodiff import ops
from ..utils.errors import ConfigError, DegenerateFrameError
from .pose import Pose3D

AREA_EPSILON = 1e-9
LENGTH_EPSILON = 1e-12


@dataclass
class SimilarityTransform:
    """x -> s R x + t, in 2D or 3D"""

    s: float
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.s = float(self.s)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        dim = self.t.shape[0]
        if self.R.shape != (dim, dim):
            raise ConfigError(f"Rotation shape {self.R.shape} does not match translation of length {dim}")
        if self.s <= 0:
            raise ConfigError(f"Similarity scale must be positive, got {self.s}")
        if not np.allclose(self.R @ self.R.T, np.eye(dim), atol=1e-9) or abs(np.linalg.det(self.R) - 1.0) > 1e-9:
            raise ConfigError("Similarity rotation must be orthonormal with det +1")

    @classmethod
    def identity(cls, dim: int = 3) -> 'SimilarityTransform':
        return cls(1.0, np.eye(dim), np.zeros(dim))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.s * points @ self.R.T + self.t

    def invert(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.t) @ self.R / self.s

    def inverse(self) -> 'SimilarityTransform':
        return SimilarityTransform(1.0 / self.s, self.R.T, -self.R.T @ self.t / self.s)

    def compose(self, inner: 'SimilarityTransform') -> 'SimilarityTransform':
        """self after inner"""
        return SimilarityTransform(self.s * inner.s, self.R @ inner.R, self.s * self.R @ inner.t + self.t)


def apply_transform(transform: SimilarityTransform, points: np.ndarray) -> np.ndarray:
    return transform.apply(points)


def invert_transform(transform: SimilarityTransform, points: np.ndarray) -> np.ndarray:
    return transform.invert(points)


@dataclass
class CanonicalFrame:
    """Differentiable canonical frame: canonical = scale * R (x - origin)"""

    scale: Tensor
    rotation: Tensor
    origin: Tensor

    def to_canonical(self, points: Union[Tensor, np.ndarray]) -> Tensor:
        centered = ops.sub(as_tensor(points), self.origin)
        return ops.mul(ops.matmul(centered, ops.transpose(self.rotation)), self.scale)

    def to_world(self, points: Union[Tensor, np.ndarray]) -> Tensor:
        rotated = ops.matmul(as_tensor(points), self.rotation)
        return ops.add(ops.div(rotated, self.scale), self.origin)

    def transform(self) -> SimilarityTransform:
        s = float(self.scale.item())
        R = self.rotation.numpy()
        return SimilarityTransform(s, R, -s * R @ self.origin.numpy())


def _validate_triple(triple: Sequence[int], count: int) -> Tuple[int, int, int]:
    if len(triple) != 3 or len(set(triple)) != 3:
        raise ConfigError(f"Frame triple must name three distinct landmarks, got {list(triple)}")
    if any(i < 0 or i >= count for i in triple):
        raise ConfigError(f"Frame triple {list(triple)} out of range for {count} landmarks")
    return int(triple[0]), int(triple[1]), int(triple[2])


def canonical_frame(points: Union[Tensor, np.ndarray], triple: Sequence[int]) -> CanonicalFrame:
    """
    Build the body frame from (spine_start, spine_end, shoulder) landmark indices.

    The spine limb becomes the +x axis with unit length, the shoulder limb's
    component orthogonal to it fixes +y, and z completes a right-handed frame.
    Differentiable with respect to the points.
    """
    points = as_tensor(points)
    a, b, c = _validate_triple(triple, points.shape[0])
    origin = points[a]
    spine = ops.sub(points[b], origin)
    length = ops.l2_norm(spine)
    if length.item() < LENGTH_EPSILON:
        raise DegenerateFrameError("Spine limb has zero length", spine=(a, b))
    x_axis = ops.div(spine, length)

    shoulder = ops.sub(points[c], origin)
    along = ops.dot(shoulder, x_axis)
    residual = ops.sub(shoulder, ops.mul(along, x_axis))
    residual_norm = ops.l2_norm(residual)
    area = 0.5 * residual_norm.item() / length.item()
    if area < AREA_EPSILON:
        raise DegenerateFrameError(f"Frame landmarks are collinear (scaled triangle area {area:.3g})",
                                   frame=(a, b, c), area=area)
    y_axis = ops.div(residual, residual_norm)
    z_axis = ops.cross(x_axis, y_axis)

    rotation = ops.stack([x_axis, y_axis, z_axis], axis=0)
    scale = ops.div(1.0, length)
    return CanonicalFrame(scale, rotation, origin)


def normalize_pose(pose: Pose3D, triple: Sequence[int]) -> Tuple[Pose3D, SimilarityTransform]:
    """
    Express a world pose in its canonical body frame.

    Args:
        pose: World-frame pose
        triple: (spine_start, spine_end, shoulder) indices into the primary block

    Returns:
        (canonical pose, world-to-canonical transform)
    """
    frame = canonical_frame(pose.primary, triple)
    transform = frame.transform()
    canonical = transform.apply(pose.stacked())
    return Pose3D.from_stacked(canonical, pose.num_primary, normalized=True), transform


def denormalize_points(points: np.ndarray, transform: SimilarityTransform) -> np.ndarray:
    return transform.invert(points)


def normalize_points_2d(points: np.ndarray, triple: Sequence[int]) -> Tuple[np.ndarray, SimilarityTransform]:
    """
    Planar analog of the body frame: spine start at the origin, spine along +x, unit length.

    Args:
        points: (N, 2) pixel coordinates (primary block first)
        triple: Landmark triple; only the spine pair is used in 2D

    Returns:
        (canonical 2D points, pixel-to-canonical transform)
    """
    points = np.asarray(points, dtype=np.float64)
    a, b, _ = _validate_triple(triple, points.shape[0])
    spine = points[b] - points[a]
    length = float(np.linalg.norm(spine))
    if length < LENGTH_EPSILON:
        raise DegenerateFrameError("Projected spine limb has zero length", spine=(a, b))
    x_axis = spine / length
    R = np.array([[x_axis[0], x_axis[1]], [-x_axis[1], x_axis[0]]])
    s = 1.0 / length
    transform = SimilarityTransform(s, R, -s * R @ points[a])
    return transform.apply(points), transform


def procrustes_align(source: np.ndarray, target: np.ndarray) -> SimilarityTransform:
    """
    Least-squares similarity aligning source points onto target points (Umeyama).

    Args:
        source: (N, d) points
        target: (N, d) template points

    Returns:
        Transform T minimizing sum ||T(source) - target||^2
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.shape != target.shape or source.shape[0] < source.shape[1]:
        raise ConfigError(f"Procrustes needs matching point sets with at least d points, got {source.shape} and {target.shape}")
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    src = source - mu_s
    tgt = target - mu_t
    variance = float(np.sum(src * src)) / source.shape[0]
    if variance < LENGTH_EPSILON:
        raise DegenerateFrameError("Source points are coincident")
    covariance = tgt.T @ src / source.shape[0]
    U, sigma, Vt = np.linalg.svd(covariance)
    correction = np.eye(source.shape[1])
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        correction[-1, -1] = -1.0
    R = U @ correction @ Vt
    s = float(np.trace(np.diag(sigma) @ correction)) / variance
    return SimilarityTransform(s, R, mu_t - s * R @ mu_s)
