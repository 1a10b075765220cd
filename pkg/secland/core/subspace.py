"""
Shared pose subspace for SecLand
PCA joint space over primary+secondary landmarks and secondary-from-primary reconstruction
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..geometry import (
    CameraParams, Pose2D, Pose3D, normalize_points_2d, normalize_pose, project, triangulate_dlt,
)
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError, DataError, DegenerateFrameError, EmptyDatasetError
from ..utils.logger import get_logger

logger = get_logger('core.subspace')

RIDGE_FACTOR = 1e-8
DEFAULT_VARIANCE_THRESHOLD = 0.95
MODES = ('2d', '3d')


@dataclass
class PoseBasis:
    """
    Mean pose and orthonormal bases over flattened [primary..., secondary...] vectors.

    The first dim*P entries of every vector belong to primary landmarks.
    """

    mean: np.ndarray
    bases: np.ndarray
    num_primary: int
    num_secondary: int
    dim: int = 3
    explained_variance: np.ndarray = field(default_factory=lambda: np.zeros(0))
    total_variance: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        length = self.mean.shape[0]
        self.bases = np.asarray(self.bases, dtype=np.float64).reshape(-1, length)
        self.explained_variance = np.asarray(self.explained_variance, dtype=np.float64).reshape(-1)
        if self.dim not in (2, 3):
            raise ConfigError(f"Basis dimension must be 2 or 3, got {self.dim}")
        if length != self.dim * (self.num_primary + self.num_secondary):
            raise ConfigError(f"Basis vectors of length {length} do not match {self.num_primary}+"
                              f"{self.num_secondary} landmarks in {self.dim}D")

    @property
    def num_bases(self) -> int:
        return self.bases.shape[0]

    @property
    def mode(self) -> str:
        return f"{self.dim}d"

    @property
    def split_index(self) -> int:
        return self.dim * self.num_primary

    @property
    def mean_primary(self) -> np.ndarray:
        return self.mean[:self.split_index]

    @property
    def mean_secondary(self) -> np.ndarray:
        return self.mean[self.split_index:]

    @property
    def bases_primary(self) -> np.ndarray:
        return self.bases[:, :self.split_index]

    @property
    def bases_secondary(self) -> np.ndarray:
        return self.bases[:, self.split_index:]

    def explained_variance_ratio(self) -> np.ndarray:
        """Cumulative fraction of total variance captured by the first k bases"""
        if self.total_variance <= 0:
            return np.zeros(self.num_bases)
        return np.cumsum(self.explained_variance) / self.total_variance

    def truncated(self, num_bases: int) -> 'PoseBasis':
        num_bases = min(int(num_bases), self.num_bases)
        return PoseBasis(self.mean, self.bases[:num_bases], self.num_primary, self.num_secondary, self.dim,
                         self.explained_variance[:num_bases], self.total_variance, list(self.warnings))

    def project(self, vectors: np.ndarray) -> np.ndarray:
        """Reconstruct full pose vectors from their own coefficients (unmasked)"""
        vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, self.mean.shape[0])
        coefficients = (vectors - self.mean) @ self.bases.T
        return coefficients @ self.bases + self.mean


@dataclass
class PrimaryConfig:
    """Inclusion mask over the primary landmarks"""

    mask: np.ndarray
    name: str = 'full'

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if int(self.mask.sum()) < 3:
            raise ConfigError(f"Primary configuration '{self.name}' includes {int(self.mask.sum())} landmarks; "
                              f"at least 3 are required", config=self.name)

    @property
    def num_included(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def full(cls, num_primary: int) -> 'PrimaryConfig':
        return cls(np.ones(num_primary, dtype=bool), 'full')

    @classmethod
    def excluding(cls, num_primary: int, excluded: Sequence[int], name: str) -> 'PrimaryConfig':
        mask = np.ones(num_primary, dtype=bool)
        mask[list(excluded)] = False
        return cls(mask, name)

    def rows(self, dim: int) -> np.ndarray:
        """Flattened coordinate rows kept by the mask"""
        return np.repeat(self.mask, dim)


@dataclass
class AnalysisConfig:
    num_bases: Optional[int] = None
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
    holdout: float = 0.3
    per_view: bool = False
    pckh_threshold: float = 0.5
    seed: int = 0

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'AnalysisConfig':
        return section_from_dict(cls, entry, 'analysis')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def default_primary_configs(primary_names: Sequence[str]) -> List[PrimaryConfig]:
    """
    Seven configurations: everything, then with one body region withheld each time
    (wrists, left arm, right arm, head, legs, tail).
    """
    names = list(primary_names)
    count = len(names)

    def pick(*wanted):
        return [names.index(w) for w in wanted if w in names]

    layouts = [
        ('no_wrists', pick('right_hand', 'left_hand')),
        ('no_left_arm', pick('left_hand', 'left_shoulder')),
        ('no_right_arm', pick('right_hand', 'right_shoulder')),
        ('no_head', pick('nose', 'head')),
        ('no_legs', pick('right_knee', 'right_foot', 'left_knee', 'left_foot')),
        ('no_tail', pick('tail')),
    ]
    configs = [PrimaryConfig.full(count)]
    for name, excluded in layouts:
        if excluded and count - len(excluded) >= 3:
            configs.append(PrimaryConfig.excluding(count, excluded, name))
    return configs


def _pose_vectors(poses: Sequence[Union[Pose3D, Pose2D, np.ndarray]]) -> Tuple[np.ndarray, Optional[int]]:
    vectors, num_primary = [], None
    for pose in poses:
        if isinstance(pose, (Pose3D, Pose2D)):
            if num_primary is not None and pose.num_primary != num_primary:
                raise DataError("Poses come from different skeletons")
            num_primary = pose.num_primary
            vectors.append(pose.vector())
        else:
            vectors.append(np.asarray(pose, dtype=np.float64).reshape(-1))
    lengths = {v.shape[0] for v in vectors}
    if len(lengths) > 1:
        raise DataError(f"Pose vectors have differing lengths {sorted(lengths)}")
    return np.vstack(vectors) if vectors else np.zeros((0, 0)), num_primary


def fit_basis(poses: Sequence[Union[Pose3D, Pose2D, np.ndarray]], num_bases: Optional[int] = None,
              num_primary: Optional[int] = None, dim: Optional[int] = None,
              variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> PoseBasis:
    """
    Principal component basis of canonical pose vectors.

    Args:
        poses: Canonical Pose3D/Pose2D objects or flat vectors
        num_bases: B; None picks the smallest B reaching variance_threshold
        num_primary: Primary landmark count (taken from the poses when they are Pose objects)
        dim: 2 or 3 (taken from the pose type when omitted)
        variance_threshold: Explained-variance target for automatic B

    Returns:
        PoseBasis with at most B bases; fewer (with a warning) when the data has lower rank
    """
    data, inferred_primary = _pose_vectors(poses)
    if dim is None:
        dim = 2 if poses and isinstance(poses[0], Pose2D) else 3
    num_primary = inferred_primary if num_primary is None else num_primary
    if num_primary is None:
        raise ConfigError("num_primary is required when fitting raw vectors")
    n = data.shape[0]
    if num_bases is not None and num_bases < 0:
        raise ConfigError(f"Number of bases must be non-negative, got {num_bases}")
    needed = (num_bases if num_bases is not None else 1) + 1
    if n < needed:
        raise DataError(f"Need at least {needed} poses to fit {num_bases} bases, got {n}", samples=n)
    length = data.shape[1]
    num_secondary = length // dim - num_primary

    mean = data.mean(axis=0)
    centered = data - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    variances = singular ** 2 / (n - 1)
    total = float(np.sum(centered ** 2) / (n - 1))
    tolerance = max(singular[0] if singular.size else 0.0, 1.0) * max(n, length) * np.finfo(np.float64).eps
    rank = int(np.sum(singular > tolerance))

    if num_bases is None:
        num_bases = choose_num_bases_from_variances(variances[:rank], total, variance_threshold)
    warnings = []
    if rank < num_bases:
        message = f"Pose data has rank {rank}; returning {rank} of {num_bases} requested bases"
        logger.warning(message)
        warnings.append(message)
        num_bases = rank
    if rank == 0:
        message = "Pose data has zero variance; basis is the mean pose only"
        if message not in warnings:
            logger.warning(message)
            warnings.append(message)

    bases = vt[:num_bases].copy()
    for row in bases:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PoseBasis(mean, bases, num_primary, num_secondary, dim, variances[:num_bases], total, warnings)


def choose_num_bases_from_variances(variances: np.ndarray, total: float, threshold: float) -> int:
    if total <= 0 or variances.size == 0:
        return 0
    cumulative = np.cumsum(variances) / total
    reached = np.flatnonzero(cumulative >= threshold - 1e-12)
    return int(reached[0] + 1) if reached.size else int(variances.size)


def explained_variance_ratio(poses: Sequence[Union[Pose3D, Pose2D, np.ndarray]]) -> np.ndarray:
    """Cumulative explained-variance curve of the full PCA"""
    data, _ = _pose_vectors(poses)
    if data.shape[0] < 2:
        raise DataError("Need at least 2 poses for a variance curve")
    centered = data - data.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    variances = singular ** 2
    total = float(np.sum(variances))
    if total <= 0:
        return np.zeros_like(variances)
    return np.cumsum(variances) / total


def choose_num_bases(poses: Sequence[Union[Pose3D, Pose2D, np.ndarray]],
                     threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> int:
    curve = explained_variance_ratio(poses)
    if curve.size == 0 or curve[-1] <= 0:
        return 0
    return int(np.flatnonzero(curve >= threshold - 1e-12)[0] + 1)


@dataclass
class Reconstruction:
    secondary: np.ndarray
    coefficients: np.ndarray
    error: Optional[np.ndarray] = None
    ridge: bool = False


def _masked_coefficients(basis: PoseBasis, primary: np.ndarray, config: PrimaryConfig) -> Tuple[np.ndarray, bool]:
    rows = config.rows(basis.dim)
    design = basis.bases_primary[:, rows].T
    target = primary[:, rows] - basis.mean_primary[rows]
    if basis.num_bases == 0:
        return np.zeros((primary.shape[0], 0)), False
    if np.linalg.matrix_rank(design) < basis.num_bases:
        normal = design.T @ design
        ridge = RIDGE_FACTOR * max(np.trace(normal), np.finfo(np.float64).tiny)
        logger.warning(f"Masked design for configuration '{config.name}' is rank deficient; "
                       f"using ridge {ridge:.3g}")
        coefficients = np.linalg.solve(normal + ridge * np.eye(basis.num_bases), design.T @ target.T).T
        return coefficients, True
    coefficients, _, _, _ = scipy.linalg.lstsq(design, target.T)
    return coefficients.T, False


def reconstruct_secondary(basis: PoseBasis, primary: np.ndarray, config: Optional[PrimaryConfig] = None,
                          truth: Optional[np.ndarray] = None) -> Reconstruction:
    """
    Predict secondary landmarks from (masked) primary ones through the shared basis.

    Args:
        basis: Joint basis
        primary: (P, dim) canonical primary coordinates, or (N, P, dim) for a batch
        config: Inclusion mask; None uses every primary landmark
        truth: Optional (S, dim) / (N, S, dim) secondary ground truth

    Returns:
        Reconstruction with secondary coordinates shaped like the input batch and,
        when truth is given, the squared reconstruction error per pose
    """
    primary = np.asarray(primary, dtype=np.float64)
    single = primary.ndim <= 2
    batch = primary.reshape(-1, basis.split_index)
    config = config or PrimaryConfig.full(basis.num_primary)
    if config.mask.shape[0] != basis.num_primary:
        raise ConfigError(f"Configuration '{config.name}' has {config.mask.shape[0]} entries for "
                          f"{basis.num_primary} primary landmarks", config=config.name)

    coefficients, ridge = _masked_coefficients(basis, batch, config)
    secondary = coefficients @ basis.bases_secondary + basis.mean_secondary
    secondary = secondary.reshape(-1, basis.num_secondary, basis.dim)

    error = None
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64).reshape(secondary.shape)
        error = np.sum((secondary - truth) ** 2, axis=(1, 2))
    if single:
        return Reconstruction(secondary[0], coefficients[0], None if error is None else error[0], ridge)
    return Reconstruction(secondary, coefficients, error, ridge)


def save_basis(path, basis: PoseBasis):
    meta = {'num_primary': basis.num_primary, 'num_secondary': basis.num_secondary, 'dim': basis.dim,
            'total_variance': basis.total_variance}
    params = {'mean': basis.mean, 'bases': basis.bases, 'explained_variance': basis.explained_variance}
    return save_checkpoint(path, params, 'pose_basis', meta)


def load_basis(path) -> PoseBasis:
    params, meta = load_checkpoint(path, 'pose_basis')
    return PoseBasis(params['mean'], params['bases'], int(meta['num_primary']), int(meta['num_secondary']),
                     int(meta['dim']), params['explained_variance'], float(meta['total_variance']))


# 2D versus 3D comparison

@dataclass
class SubspaceData:
    """
    Annotated multiview poses for the subspace study.

    poses_2d[n][c] is frame n seen by camera c (full primary + secondary truth).
    """

    cameras: List[CameraParams]
    poses_2d: List[List[Pose2D]]
    frame_triple: Tuple[int, int, int]
    reference_pair: Tuple[int, int]
    frame_ids: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.frame_ids:
            self.frame_ids = list(range(len(self.poses_2d)))

    @property
    def num_frames(self) -> int:
        return len(self.poses_2d)

    @property
    def num_primary(self) -> int:
        return self.poses_2d[0][0].num_primary

    @property
    def num_secondary(self) -> int:
        return self.poses_2d[0][0].num_secondary


@dataclass
class SubspaceReport:
    """Per-landmark rows and per-configuration summaries of the comparison"""

    rows: List[Dict[str, Any]]
    summary: List[Dict[str, Any]]
    num_bases: Dict[str, int]
    skipped: int = 0


def _triangulated_canonical(data: SubspaceData, indices: Sequence[int]):
    if len(data.cameras) < 2:
        raise DataError("3D mode needs at least two calibrated views; triangulation is impossible with one camera",
                        cameras=len(data.cameras))
    poses, transforms, kept = [], [], []
    for n in indices:
        first, second = data.poses_2d[n][0], data.poses_2d[n][1]
        world = triangulate_dlt(first.stacked(), second.stacked(), data.cameras[0], data.cameras[1])
        try:
            canonical, transform = normalize_pose(Pose3D.from_stacked(world, data.num_primary), data.frame_triple)
        except DegenerateFrameError:
            continue
        poses.append(canonical)
        transforms.append(transform)
        kept.append(n)
    return poses, transforms, kept


def _planar_canonical(data: SubspaceData, indices: Sequence[int], views: Sequence[int]):
    vectors, transforms, kept = [], [], []
    for n in indices:
        for c in views:
            try:
                canonical, transform = normalize_points_2d(data.poses_2d[n][c].stacked(), data.frame_triple)
            except DegenerateFrameError:
                continue
            vectors.append(canonical.reshape(-1))
            transforms.append(transform)
            kept.append((n, c))
    return vectors, transforms, kept


def _reference_lengths(data: SubspaceData, n: int) -> np.ndarray:
    a, b = data.reference_pair
    return np.array([np.linalg.norm(p.stacked()[a] - p.stacked()[b]) for p in data.poses_2d[n]])


def _landmark_rows(config: PrimaryConfig, mode: str, names: Sequence[str], canonical: np.ndarray,
                   pixels: np.ndarray) -> List[Dict[str, Any]]:
    rows = []
    for s, name in enumerate(names):
        rows.append({
            'config': config.name,
            'mode': mode,
            'landmark': name,
            'mean_error': float(np.mean(canonical[:, s])),
            'median_error': float(np.median(canonical[:, s])),
            'mean_error_px': float(np.mean(pixels[:, s])),
            'median_error_px': float(np.median(pixels[:, s])),
        })
    return rows


def compare_2d_3d(data: SubspaceData, configs: Sequence[PrimaryConfig], num_bases: Optional[int] = None,
                  secondary_names: Optional[Sequence[str]] = None, modes: Sequence[str] = MODES,
                  config: Optional[AnalysisConfig] = None) -> SubspaceReport:
    """
    Secondary reconstruction error per primary configuration in 2D and 3D shared spaces.

    Frames are split into a fitting part and an evaluation part. 3D mode
    triangulates the first two views, normalizes to the body frame and
    fits one PCA; 2D mode canonicalizes each projected view and fits a
    pooled PCA (or one per camera with per_view). Errors are reported in
    canonical units of each mode and in pixels; the pixel ratio 3D/2D is
    the comparable column.

    Args:
        data: Annotated multiview poses
        configs: Primary configurations to evaluate
        num_bases: B for both modes; None picks B per mode by the variance rule
        secondary_names: Landmark names for the rows
        modes: Subset of ('2d', '3d')
        config: Analysis options

    Returns:
        SubspaceReport
    """
    config = config or AnalysisConfig(num_bases=num_bases)
    num_bases = num_bases if num_bases is not None else config.num_bases
    modes = [m.lower() for m in modes]
    for mode in modes:
        if mode not in MODES:
            raise ConfigError(f"Unknown analysis mode '{mode}'", mode=mode)
    if data.num_frames < 4:
        raise EmptyDatasetError(f"Subspace analysis needs at least 4 annotated frames, got {data.num_frames}")
    names = list(secondary_names or [f"s{i}" for i in range(data.num_secondary)])
    views = list(range(len(data.cameras)))

    order = np.random.default_rng(config.seed).permutation(data.num_frames)
    num_eval = min(max(int(round(config.holdout * data.num_frames)), 1), data.num_frames - 2)
    eval_idx = sorted(order[:num_eval].tolist())
    fit_idx = sorted(order[num_eval:].tolist())

    rows: List[Dict[str, Any]] = []
    errors_px: Dict[Tuple[str, str], float] = {}
    pckh: Dict[Tuple[str, str], float] = {}
    chosen: Dict[str, int] = {}
    skipped = 0

    if '3d' in modes:
        fit_poses, _, _ = _triangulated_canonical(data, fit_idx)
        basis = fit_basis(fit_poses, num_bases, variance_threshold=config.variance_threshold)
        chosen['3d'] = basis.num_bases
        eval_poses, transforms, kept = _triangulated_canonical(data, eval_idx)
        skipped += len(eval_idx) - len(kept)
        if not kept:
            raise EmptyDatasetError("No evaluation frame survived 3D normalization")
        primary = np.stack([p.primary for p in eval_poses])
        truth = np.stack([p.secondary for p in eval_poses])
        for primary_config in configs:
            result = reconstruct_secondary(basis, primary, primary_config, truth)
            canonical_err = np.linalg.norm(result.secondary - truth, axis=-1)
            pixel_err = np.zeros_like(canonical_err)
            hits = []
            for k, (n, transform) in enumerate(zip(kept, transforms)):
                world = transform.invert(result.secondary[k])
                lengths = _reference_lengths(data, n)
                per_view = []
                for c in views:
                    projected = project(data.cameras[c], world)
                    distance = np.linalg.norm(projected - data.poses_2d[n][c].secondary, axis=-1)
                    per_view.append(distance)
                    if lengths[c] > 0:
                        hits.append(distance <= config.pckh_threshold * lengths[c])
                pixel_err[k] = np.mean(per_view, axis=0)
            rows.extend(_landmark_rows(primary_config, '3d', names, canonical_err, pixel_err))
            errors_px[(primary_config.name, '3d')] = float(np.mean(pixel_err))
            pckh[(primary_config.name, '3d')] = float(np.mean(hits)) if hits else float('nan')

    if '2d' in modes:
        basis_views = [[c] for c in views] if config.per_view else [views]
        per_config_canonical = {c.name: [] for c in configs}
        per_config_pixels = {c.name: [] for c in configs}
        per_config_hits = {c.name: [] for c in configs}
        for group in basis_views:
            fit_vectors, _, _ = _planar_canonical(data, fit_idx, group)
            basis = fit_basis(fit_vectors, num_bases, num_primary=data.num_primary, dim=2,
                              variance_threshold=config.variance_threshold)
            chosen['2d' if not config.per_view else f"2d_cam{group[0]}"] = basis.num_bases
            eval_vectors, transforms, kept = _planar_canonical(data, eval_idx, group)
            skipped += len(eval_idx) * len(group) - len(kept)
            if not kept:
                continue
            stacked = np.stack(eval_vectors).reshape(len(kept), -1, 2)
            primary = stacked[:, :data.num_primary]
            truth = stacked[:, data.num_primary:]
            for primary_config in configs:
                result = reconstruct_secondary(basis, primary, primary_config, truth)
                per_config_canonical[primary_config.name].append(np.linalg.norm(result.secondary - truth, axis=-1))
                pixels = np.zeros((len(kept), data.num_secondary))
                for k, ((n, c), transform) in enumerate(zip(kept, transforms)):
                    predicted = transform.invert(result.secondary[k])
                    pixels[k] = np.linalg.norm(predicted - data.poses_2d[n][c].secondary, axis=-1)
                    length = _reference_lengths(data, n)[c]
                    if length > 0:
                        per_config_hits[primary_config.name].append(pixels[k] <= config.pckh_threshold * length)
                per_config_pixels[primary_config.name].append(pixels)
        if not any(per_config_pixels.values()):
            raise EmptyDatasetError("No evaluation view survived 2D normalization")
        for primary_config in configs:
            canonical_err = np.vstack(per_config_canonical[primary_config.name])
            pixel_err = np.vstack(per_config_pixels[primary_config.name])
            rows.extend(_landmark_rows(primary_config, '2d', names, canonical_err, pixel_err))
            errors_px[(primary_config.name, '2d')] = float(np.mean(pixel_err))
            hits = per_config_hits[primary_config.name]
            pckh[(primary_config.name, '2d')] = float(np.mean(hits)) if hits else float('nan')

    summary = []
    for primary_config in configs:
        entry = {'config': primary_config.name, 'included': primary_config.num_included}
        for mode in MODES:
            if mode in modes:
                entry[f'error_{mode}_px'] = errors_px[(primary_config.name, mode)]
                entry[f'pckh_{mode}'] = pckh[(primary_config.name, mode)]
        if '2d' in modes and '3d' in modes:
            denominator = entry['error_2d_px']
            entry['ratio'] = entry['error_3d_px'] / denominator if denominator > 0 else float('nan')
        summary.append(entry)
    if skipped:
        logger.warning(f"Skipped {skipped} degenerate poses during subspace analysis")
    return SubspaceReport(rows, summary, chosen, skipped)


def subspace_data_from_dataset(dataset) -> SubspaceData:
    """Collect frames with full 2D truth in every view from a loaded Dataset"""
    frames = [f for f in dataset.annotated_frames() if f.has_primary_labels]
    if not frames:
        raise EmptyDatasetError("Dataset has no frames with full landmark truth")
    skeleton = dataset.skeleton
    return SubspaceData(
        cameras=dataset.cameras,
        poses_2d=[list(f.poses_2d) for f in frames],
        frame_triple=skeleton.frame_triple,
        reference_pair=skeleton.reference_pair,
        frame_ids=[f.frame_id for f in frames],
    )
