"""
Articulated skeleton and pose model for SecLand
Kinematic tree, low-rank joint-angle Gaussian and forward kinematics
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..geometry import Pose3D
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError


@dataclass
class SkeletonSpec:
    """
    Landmark names, kinematic tree and primary/secondary designation.

    Landmarks are stored in output order: primary block first, then secondary.
    `offsets` are rest-pose bone vectors from the parent, in the root frame.
    """

    names: List[str]
    parents: List[int]
    offsets: np.ndarray
    primary: List[bool]
    frame_triple: Tuple[int, int, int]
    reference_pair: Tuple[int, int]

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 3)
        self.frame_triple = tuple(int(i) for i in self.frame_triple)
        self.reference_pair = tuple(int(i) for i in self.reference_pair)
        self.validate()

    @property
    def num_landmarks(self) -> int:
        return len(self.names)

    @property
    def num_primary(self) -> int:
        return int(sum(self.primary))

    @property
    def num_secondary(self) -> int:
        return self.num_landmarks - self.num_primary

    @property
    def primary_names(self) -> List[str]:
        return self.names[:self.num_primary]

    @property
    def secondary_names(self) -> List[str]:
        return self.names[self.num_primary:]

    @property
    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets, axis=1)

    @property
    def bones(self) -> List[Tuple[int, int]]:
        return [(p, c) for c, p in enumerate(self.parents) if p >= 0]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"Unknown landmark '{name}'", landmark=name)

    def topological_order(self) -> List[int]:
        order: List[int] = []
        children: Dict[int, List[int]] = {i: [] for i in range(self.num_landmarks)}
        for child, parent in enumerate(self.parents):
            if parent >= 0:
                children[parent].append(child)
        stack = [i for i, p in enumerate(self.parents) if p < 0]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(reversed(children[node]))
        return order

    def validate(self):
        n = len(self.names)
        if not (len(self.parents) == len(self.primary) == self.offsets.shape[0] == n):
            raise ConfigError("Skeleton fields disagree on the landmark count")
        if len(set(self.names)) != n:
            raise ConfigError("Skeleton landmark names must be unique")
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise ConfigError(f"Skeleton must have a single root, found {len(roots)}")
        if any(p >= n for p in self.parents):
            raise ConfigError("Skeleton parent index out of range")
        if len(self.topological_order()) != n:
            raise ConfigError("Skeleton kinematic tree has a cycle or disconnected landmarks")
        num_primary = int(sum(self.primary))
        if list(self.primary) != [True] * num_primary + [False] * (n - num_primary):
            raise ConfigError("Skeleton must list primary landmarks before secondary ones")
        if num_primary < 3:
            raise ConfigError("Skeleton needs at least three primary landmarks")
        if any(i < 0 or i >= num_primary for i in self.frame_triple) or len(set(self.frame_triple)) != 3:
            raise ConfigError(f"Frame triple {self.frame_triple} must name three distinct primary landmarks")
        if any(i < 0 or i >= n for i in self.reference_pair):
            raise ConfigError(f"Reference pair {self.reference_pair} out of range")
        lengths = self.bone_lengths
        if any(lengths[c] <= 0 for c, p in enumerate(self.parents) if p >= 0):
            raise ConfigError("Every bone must have positive length")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'names': list(self.names),
            'parents': list(self.parents),
            'offsets': self.offsets.tolist(),
            'primary': list(self.primary),
            'frame_triple': list(self.frame_triple),
            'reference_pair': list(self.reference_pair),
        }

    @classmethod
    def from_dict(cls, entry: Dict[str, Any]) -> 'SkeletonSpec':
        try:
            return cls(entry['names'], entry['parents'], entry['offsets'], entry['primary'],
                       tuple(entry['frame_triple']), tuple(entry['reference_pair']))
        except KeyError as e:
            raise ConfigError(f"Skeleton definition is missing field {e}")


def default_skeleton() -> SkeletonSpec:
    """
    Quadruped/primate-like body: 13 primary landmarks and 6 secondary ones
    (elbows, ears, spine midpoint, tail midpoint).
    """
    # name, parent name, rest offset from parent (root frame, z up, facing +x), primary
    layout = [
        ('nose', 'head', (0.10, 0.00, 0.02), True),
        ('head', 'neck', (0.00, 0.00, 0.14), True),
        ('neck', 'spine_mid', (0.00, 0.00, 0.26), True),
        ('right_shoulder', 'neck', (0.00, -0.16, -0.04), True),
        ('right_hand', 'right_elbow', (0.03, 0.00, -0.24), True),
        ('left_shoulder', 'neck', (0.00, 0.16, -0.04), True),
        ('left_hand', 'left_elbow', (0.03, 0.00, -0.24), True),
        ('hip', None, (0.00, 0.00, 0.00), True),
        ('right_knee', 'hip', (0.02, -0.10, -0.40), True),
        ('right_foot', 'right_knee', (-0.02, 0.00, -0.40), True),
        ('left_knee', 'hip', (0.02, 0.10, -0.40), True),
        ('left_foot', 'left_knee', (-0.02, 0.00, -0.40), True),
        ('tail', 'tail_mid', (-0.18, 0.00, -0.12), True),
        ('right_elbow', 'right_shoulder', (0.00, -0.03, -0.25), False),
        ('left_elbow', 'left_shoulder', (0.00, 0.03, -0.25), False),
        ('right_ear', 'head', (-0.01, -0.07, 0.05), False),
        ('left_ear', 'head', (-0.01, 0.07, 0.05), False),
        ('spine_mid', 'hip', (0.00, 0.00, 0.26), False),
        ('tail_mid', 'hip', (-0.20, 0.00, -0.04), False),
    ]
    names = [entry[0] for entry in layout]
    parents = [names.index(entry[1]) if entry[1] else -1 for entry in layout]
    offsets = [entry[2] for entry in layout]
    primary = [entry[3] for entry in layout]
    return SkeletonSpec(
        names=names,
        parents=parents,
        offsets=offsets,
        primary=primary,
        frame_triple=(names.index('neck'), names.index('hip'), names.index('right_shoulder')),
        reference_pair=(names.index('head'), names.index('neck')),
    )


@dataclass
class PoseModelConfig:
    rank: int = 4
    angle_std: float = 0.35
    residual_std: float = 0.08
    angle_limit: float = 1.2
    yaw_range: float = 2.0 * np.pi
    translation_radius: float = 0.3
    seed: int = 1234

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'PoseModelConfig':
        return section_from_dict(cls, entry, 'pose_model')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class PoseModel:
    """
    Joint angles = mean + basis @ g + residual, g ~ N(0, I_rank), clamped to +-angle_limit.

    Two angles per landmark (rotations about the local x and y axes); the
    root's pair tilts the whole body. Global yaw and ground-plane translation
    are drawn uniformly and are removed again by normalization.
    """

    mean: np.ndarray
    basis: np.ndarray
    residual_std: float = 0.0
    angle_limit: float = np.pi
    yaw_range: float = 0.0
    translation_radius: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.basis = np.asarray(self.basis, dtype=np.float64).reshape(self.mean.shape[0], -1)
        if self.basis.shape[1] > self.mean.shape[0]:
            raise ConfigError(f"Pose model rank {self.basis.shape[1]} exceeds angle count {self.mean.shape[0]}")

    @property
    def num_angles(self) -> int:
        return self.mean.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def build_pose_model(skeleton: SkeletonSpec, config: PoseModelConfig) -> PoseModel:
    num_angles = 2 * skeleton.num_landmarks
    if config.rank > num_angles or config.rank < 0:
        raise ConfigError(f"Pose model rank {config.rank} must be within [0, {num_angles}]")
    rng = np.random.default_rng(config.seed)
    # per-angle standard deviation is angle_std regardless of rank
    basis = rng.standard_normal((num_angles, config.rank)) * config.angle_std / np.sqrt(max(config.rank, 1))
    return PoseModel(
        mean=np.zeros(num_angles),
        basis=basis,
        residual_std=config.residual_std,
        angle_limit=config.angle_limit,
        yaw_range=config.yaw_range,
        translation_radius=config.translation_radius,
    )


def forward_kinematics(skeleton: SkeletonSpec, angles: np.ndarray, yaw: float = 0.0,
                       translation: Sequence[float] = (0.0, 0.0, 0.0)) -> np.ndarray:
    """
    World positions (N, 3) of every landmark; bone lengths are preserved exactly.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(skeleton.num_landmarks, 2)
    local = Rotation.from_euler('xy', angles).as_matrix()
    world_rotation = np.zeros((skeleton.num_landmarks, 3, 3))
    positions = np.zeros((skeleton.num_landmarks, 3))
    base = Rotation.from_euler('z', yaw).as_matrix()
    origin = np.asarray(translation, dtype=np.float64)
    for node in skeleton.topological_order():
        parent = skeleton.parents[node]
        if parent < 0:
            world_rotation[node] = base @ local[node]
            positions[node] = origin
            continue
        world_rotation[node] = world_rotation[parent] @ local[node]
        positions[node] = positions[parent] + world_rotation[node] @ skeleton.offsets[node]
    return positions


def sample_pose(skeleton: SkeletonSpec, model: PoseModel, seed) -> Pose3D:
    """
    Draw one world pose from the pose model.

    Args:
        skeleton: Kinematic tree
        model: Joint-angle distribution
        seed: Anything accepted by numpy.random.default_rng

    Returns:
        World-frame Pose3D
    """
    if model.num_angles != 2 * skeleton.num_landmarks:
        raise ConfigError(f"Pose model has {model.num_angles} angles, skeleton needs {2 * skeleton.num_landmarks}")
    rng = np.random.default_rng(seed)
    latent = rng.standard_normal(model.rank)
    residual = rng.standard_normal(model.num_angles) * model.residual_std
    angles = np.clip(model.mean + model.basis @ latent + residual, -model.angle_limit, model.angle_limit)
    yaw = rng.uniform(0.0, model.yaw_range) if model.yaw_range > 0 else 0.0
    if model.translation_radius > 0:
        translation = np.append(rng.uniform(-model.translation_radius, model.translation_radius, 2), 0.0)
    else:
        translation = np.zeros(3)
    points = forward_kinematics(skeleton, angles, yaw, translation)
    return Pose3D.from_stacked(points, skeleton.num_primary)

