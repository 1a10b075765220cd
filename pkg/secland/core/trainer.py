"""
Training loop for SecLand
Supervised pretraining, semi-supervised multiview refinement and the mode/label-ratio ablation grid
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Adam, Tape, Tensor, constant
from ..autodiff import ops
from ..geometry import normalize_pose, triangulate_dlt, Pose3D
from ..synth.dataset import DatasetSplit, MultiviewFrame, restrict_labels
from ..synth.skeleton import SkeletonSpec
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError, EmptyDatasetError, NonFiniteError, NumericalError
from ..utils.helpers import derive_seed
from ..utils.logger import get_logger
from ..utils.output import CsvLog
from .detector import DetectorConfig
from .losses import LossBreakdown, LossWeights, ViewObservation, pair_loss, total_objective, triangulation_pair_loss
from .model import TrainedModel
from .predictor import PredictorConfig, regression_loss
from .runner import JobRunner

logger = get_logger('core.trainer')

MODES = ('supervised', 'triangulation', 'geometric', 'full')
MODE_LABELS = {
    'supervised': 'L_L',
    'triangulation': 'L_L+L_U^t',
    'geometric': 'L_L+L_U^g',
    'full': 'L_L+L_U^g+L_U^c',
}
LOG_FIELDS = ('step', 'phase', 'lr') + LossBreakdown.TERMS + \
             ('regression', 'lambda_labeled', 'objective', 'pairs', 'skipped_pairs')

PHASE1_CHECKPOINT = 'phase1.json'
FINAL_CHECKPOINT = 'final.json'
LAST_GOOD_CHECKPOINT = 'last_good.json'
TRAIN_LOG = 'train_log.csv'


@dataclass
class TrainConfig:
    batch_size: int = 10
    learning_rate: float = 1e-4
    decay_rate: float = 0.8
    decay_steps: int = 2000
    lambda_labeled: float = 10.0
    mode: str = 'full'
    seed: int = 0
    phase1_steps: int = 5000
    phase2_steps: int = 5000
    label_ratio: Optional[float] = None
    weight_reprojection: float = 1.0
    weight_self: float = 1.0
    weight_cross: float = 1.0
    weight_triangulation: float = 1.0
    weight_regression: float = 1.0
    stop_gradient_primary: bool = False
    log_every: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"Unknown training mode '{self.mode}' (choose from {', '.join(MODES)})",
                              mode=self.mode)
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.learning_rate <= 0 or self.decay_rate <= 0 or self.decay_steps < 1:
            raise ConfigError("learning_rate and decay_rate must be positive and decay_steps at least 1")
        if self.lambda_labeled < 0:
            raise ConfigError(f"lambda_labeled must be non-negative, got {self.lambda_labeled}")
        if self.phase1_steps < 0 or self.phase2_steps < 0:
            raise ConfigError("Step budgets must be non-negative")
        if self.label_ratio is not None and not 0.0 < self.label_ratio <= 1.0:
            raise ConfigError(f"label_ratio must be in (0, 1], got {self.label_ratio}")

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'TrainConfig':
        return section_from_dict(cls, entry, 'train')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def mode_label(self) -> str:
        return MODE_LABELS[self.mode]

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.weight_reprojection, self.weight_self, self.weight_cross,
                           self.weight_triangulation, self.lambda_labeled)


@dataclass
class TrainingData:
    """Sampling pools derived from a DatasetSplit"""

    labeled: List[Tuple[MultiviewFrame, int]]
    regression_primary: np.ndarray
    regression_secondary: np.ndarray
    unlabeled: List[MultiviewFrame]
    cameras: list

    @property
    def num_regression(self) -> int:
        return self.regression_primary.shape[0]


@dataclass
class TrainResult:
    model: TrainedModel
    steps: int
    output_dir: Optional[Path] = None
    log_path: Optional[Path] = None
    checkpoints: Dict[str, Path] = field(default_factory=dict)
    last_row: Dict[str, Any] = field(default_factory=dict)


def prepare_training_data(split: DatasetSplit, frame_triple: Sequence[int]) -> TrainingData:
    """
    Labeled images from D_Z, canonical regression pairs triangulated from D_X, unlabeled frames from D_X^U.

    Raises:
        EmptyDatasetError: no labeled image
    """
    labeled = [(f, v) for f in split.labeled_primary for v in range(f.num_views) if f.poses_2d[v] is not None]
    if not labeled:
        raise EmptyDatasetError("Training needs at least one labeled image")
    if not split.cameras:
        raise ConfigError("The dataset split carries no camera rig")

    primary, secondary = [], []
    for frame in split.labeled_secondary:
        first, second = frame.poses_2d[0], frame.poses_2d[1]
        if first is None or second is None:
            continue
        try:
            points = triangulate_dlt(first.stacked(), second.stacked(), split.cameras[0], split.cameras[1])
            canonical, _ = normalize_pose(Pose3D.from_stacked(points, first.num_primary), frame_triple)
        except NumericalError as e:
            logger.debug(f"Frame {frame.frame_id} left out of predictor regression: {e}")
            continue
        primary.append(canonical.primary)
        secondary.append(canonical.secondary)
    if not primary:
        logger.warning("No labeled-secondary frame available for predictor regression")
    sample = labeled[0][0].poses_2d[labeled[0][1]]
    shape_p = (0, sample.num_primary, 3)
    shape_s = (0, sample.num_secondary, 3)
    return TrainingData(
        labeled=labeled,
        regression_primary=np.stack(primary) if primary else np.zeros(shape_p),
        regression_secondary=np.stack(secondary) if secondary else np.zeros(shape_s),
        unlabeled=[f for f in split.unlabeled if f.num_views >= 2],
        cameras=list(split.cameras),
    )


class Trainer:
    """Owns parameters, optimizer state and the training log for one run"""

    def __init__(self, config: TrainConfig, model: TrainedModel, data: TrainingData,
                 output_dir: Optional[Path] = None, progress: Optional[Callable[[int, Dict[str, Any]], None]] = None):
        self.config = config
        self.model = model
        self.data = data
        self.output_dir = Path(output_dir) if output_dir else None
        self.progress = progress
        self.params = dict(model.params)
        self.optimizer = Adam(config.learning_rate, decay_rate=config.decay_rate, decay_steps=config.decay_steps)
        self.weights = config.weights
        self.step = 0
        self.checkpoints: Dict[str, Path] = {}
        self.last_row: Dict[str, Any] = {}

    def _sample(self, rng: np.random.Generator, count: int, size: int) -> np.ndarray:
        return rng.choice(count, size=size, replace=count < size)

    def _labeled_terms(self, watched: Dict[str, Tensor], rng: np.random.Generator):
        picks = self._sample(rng, len(self.data.labeled), self.config.batch_size)
        items = [self.data.labeled[i] for i in picks]
        images = np.stack([frame.image(view) for frame, view in items])
        output = self.model.observe(images, [self.data.cameras[view] for _, view in items], watched)
        return [(obs.coordinates, frame.poses_2d[view]) for obs, (frame, view) in zip(output, items)]

    def _regression(self, watched: Dict[str, Tensor], rng: np.random.Generator) -> Tensor:
        if self.data.num_regression == 0 or self.config.weight_regression == 0:
            return constant(0.0)
        picks = self._sample(rng, self.data.num_regression, self.config.batch_size)
        loss = regression_loss(watched, self.data.regression_primary[picks], self.data.regression_secondary[picks],
                               self.model.predictor)
        return ops.scalar_mul(loss, self.config.weight_regression)

    def _unlabeled_terms(self, watched: Dict[str, Tensor], rng: np.random.Generator) -> List[LossBreakdown]:
        if self.config.mode == 'supervised' or not self.data.unlabeled:
            return []
        picks = self._sample(rng, len(self.data.unlabeled), self.config.batch_size)
        frames = [self.data.unlabeled[i] for i in picks]
        pairs = [tuple(rng.choice(f.num_views, size=2, replace=False)) for f in frames]
        images = np.stack([frame.image(v) for frame, pair in zip(frames, pairs) for v in pair])
        cameras = [self.data.cameras[v] for pair in pairs for v in pair]
        observations = self.model.observe(images, cameras, watched)

        breakdowns = []
        for n in range(len(frames)):
            view_i, view_j = observations[2 * n], observations[2 * n + 1]
            if self.config.mode == 'triangulation':
                breakdowns.append(triangulation_pair_loss(view_i, view_j, self.weights))
            else:
                breakdowns.append(pair_loss(view_i, view_j, watched, self.model.predictor, self.model.frame_triple,
                                            self.weights, contrastive=self.config.mode == 'full',
                                            stop_gradient=self.config.stop_gradient_primary))
        return breakdowns

    def _save(self, name: str, params: Dict[str, np.ndarray], **meta: Any) -> Optional[Path]:
        if self.output_dir is None:
            return None
        path = self.model.with_params(params).save(self.output_dir / name, train=self.config.to_dict(),
                                                   step=self.step, **meta)
        self.checkpoints[name] = path
        return path

    def train_step(self, phase: int, rng: np.random.Generator) -> Dict[str, Any]:
        """One optimizer update; returns the log row"""
        rate = self.optimizer.current_rate
        with Tape() as tape:
            watched = tape.watch_all(self.params)
            labeled = self._labeled_terms(watched, rng)
            unlabeled = self._unlabeled_terms(watched, rng) if phase == 2 else []
            regression = self._regression(watched, rng)
            breakdown = total_objective(labeled, unlabeled, self.config.lambda_labeled, self.weights)
            objective = ops.add(breakdown.total, regression)

        value = objective.item()
        if not np.isfinite(value):
            raise NonFiniteError(f"Objective became {value} at step {self.step}", step=self.step)
        grads = tape.backward(objective).arrays(watched)
        self.params = self.optimizer.step(self.params, grads)
        self.step += 1

        row = {'step': self.step, 'phase': phase, 'lr': rate, **breakdown.as_row(),
               'regression': float(regression.item()), 'objective': value}
        self.last_row = row
        return row

    def _run_phase(self, phase: int, steps: int, log: Optional[CsvLog]):
        rng = np.random.default_rng(derive_seed(self.config.seed, 'train', phase))
        if steps:
            logger.info(f"Phase {phase}: {steps} steps in mode {self.config.mode_label if phase == 2 else 'L_L'}")
        for _ in range(steps):
            good = dict(self.params)
            try:
                row = self.train_step(phase, rng)
            except NonFiniteError as e:
                path = self._save(LAST_GOOD_CHECKPOINT, good, phase=phase, aborted=True)
                logger.error(f"Training aborted at step {self.step}: {e}")
                raise NonFiniteError(f"Training diverged at step {self.step}: {e.message}",
                                     step=self.step, checkpoint=str(path) if path else None)
            if log and (self.step % self.config.log_every == 0 or self.step == 1):
                log.write(row)
            if self.progress:
                self.progress(self.step, row)

    def run(self) -> TrainResult:
        log = CsvLog(self.output_dir / TRAIN_LOG, LOG_FIELDS) if self.output_dir else None
        try:
            self._run_phase(1, self.config.phase1_steps, log)
            self._save(PHASE1_CHECKPOINT, self.params, phase=1)
            self._run_phase(2, self.config.phase2_steps, log)
            self._save(FINAL_CHECKPOINT, self.params, phase=2)
        finally:
            if log:
                log.close()
        return TrainResult(
            model=self.model.with_params(self.params, step=self.step),
            steps=self.step,
            output_dir=self.output_dir,
            log_path=log.path if log else None,
            checkpoints=dict(self.checkpoints),
            last_row=dict(self.last_row),
        )


def train(config: TrainConfig, split: DatasetSplit, skeleton: SkeletonSpec,
          detector_config: Optional[DetectorConfig] = None, predictor_config: Optional[PredictorConfig] = None,
          output_dir: Optional[Path] = None, model: Optional[TrainedModel] = None,
          progress: Optional[Callable[[int, Dict[str, Any]], None]] = None) -> TrainResult:
    """
    Pretrain on labeled data, then refine with the mode's objective.

    Args:
        config: Optimization settings and mode
        split: D_Z / D_X / D_X^U with the camera rig
        skeleton: Landmark layout (frame triple, reference pair)
        detector_config: Detector architecture
        predictor_config: Predictor architecture
        output_dir: Where checkpoints and the CSV log go; None keeps everything in memory
        model: Start from these parameters instead of a fresh initialization
        progress: Called with (step, log row) after every update

    Returns:
        TrainResult with the final model
    """
    if config.label_ratio is not None:
        split = restrict_labels(split, config.label_ratio, config.seed)
    data = prepare_training_data(split, skeleton.frame_triple)
    model = model or TrainedModel.initialize(skeleton, detector_config, predictor_config, config.seed)
    logger.info(f"Training {config.mode_label}: {len(data.labeled)} labeled images, "
                f"{data.num_regression} regression poses, {len(data.unlabeled)} unlabeled frames")
    return Trainer(config, model, data, output_dir, progress).run()


def effective_label_ratio(split: DatasetSplit) -> float:
    total = len(split.labeled_primary) + len(split.unlabeled)
    return len(split.labeled_secondary) / total if total else 0.0


def run_ablation(grid: Sequence[TrainConfig], split: DatasetSplit, skeleton: SkeletonSpec,
                 detector_config: Optional[DetectorConfig] = None,
                 predictor_config: Optional[PredictorConfig] = None,
                 output_dir: Optional[Path] = None, threads: int = 1,
                 thresholds: Optional[Sequence[float]] = None, show_progress: bool = False) -> List[Dict[str, Any]]:
    """
    Train and evaluate every config of a grid on one shared split.

    A failing run becomes a row with an error message; the grid continues.

    Returns:
        Rows in the shared results schema, in grid order
    """
    from ..eval.evaluate import evaluate_model
    from ..eval.pckh import TABLE_THRESHOLDS

    thresholds = tuple(thresholds or TABLE_THRESHOLDS)
    if not split.test:
        raise EmptyDatasetError("Ablation needs test frames to evaluate on")

    def job(index: int, config: TrainConfig):
        def run():
            run_dir = None
            if output_dir is not None:
                ratio = 'dataset' if config.label_ratio is None else f"{config.label_ratio:g}"
                run_dir = Path(output_dir) / f"{index:02d}_{config.mode}_{ratio}"
            result = train(config, split, skeleton, detector_config, predictor_config, run_dir)
            return evaluate_model(result.model, split.test, thresholds)
        return run

    jobs = [(f"{config.mode}@{config.label_ratio}", job(i, config)) for i, config in enumerate(grid)]
    results = JobRunner(threads, logger, "Training ablation grid...").run(jobs, show_progress)

    rows: List[Dict[str, Any]] = []
    for config, result in zip(grid, results):
        context = {
            'source': 'ablation',
            'method': 'secland',
            'mode': config.mode,
            'label_ratio': config.label_ratio if config.label_ratio is not None else effective_label_ratio(split),
            'primaries': 'detected',
        }
        if result.ok:
            rows.extend(result.value.rows(**context))
        else:
            rows.append({**context, 'error': result.error})
    return rows
