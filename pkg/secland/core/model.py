"""
Trained model bundle for SecLand
Detector and predictor parameters with their configs in one checkpoint
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..geometry import CameraParams
from ..synth.skeleton import SkeletonSpec
from ..utils.errors import ConfigError
from .detector import DetectorConfig, DetectorOutput, detect, init_detector_params
from .detector import check_params as check_detector_params
from .losses import ViewObservation
from .predictor import PredictorConfig, init_predictor_params
from .predictor import check_params as check_predictor_params

CHECKPOINT_KIND = 'secland_model'


@dataclass
class TrainedModel:
    params: Dict[str, np.ndarray]
    detector: DetectorConfig
    predictor: PredictorConfig
    frame_triple: Tuple[int, int, int]
    reference_pair: Tuple[int, int]
    landmark_names: List[str] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.detector.num_primary != self.predictor.num_primary or \
                self.detector.num_secondary != self.predictor.num_secondary:
            raise ConfigError("Detector and predictor disagree on landmark counts",
                              detector=(self.detector.num_primary, self.detector.num_secondary),
                              predictor=(self.predictor.num_primary, self.predictor.num_secondary))
        check_detector_params(self.params, self.detector)
        check_predictor_params(self.params, self.predictor)
        self.frame_triple = tuple(int(i) for i in self.frame_triple)
        self.reference_pair = tuple(int(i) for i in self.reference_pair)

    @classmethod
    def initialize(cls, skeleton: SkeletonSpec, detector: Optional[DetectorConfig] = None,
                   predictor: Optional[PredictorConfig] = None, seed: int = 0) -> 'TrainedModel':
        """Fresh parameters sized for the skeleton's landmark counts"""
        detector = detector or DetectorConfig()
        predictor = predictor or PredictorConfig()
        counts = {'num_primary': skeleton.num_primary, 'num_secondary': skeleton.num_secondary}
        detector = DetectorConfig.from_dict({**detector.to_dict(), **counts})
        predictor = PredictorConfig.from_dict({**predictor.to_dict(), **counts})
        params = {**init_detector_params(detector, seed), **init_predictor_params(predictor, seed + 1)}
        return cls(params, detector, predictor, skeleton.frame_triple, skeleton.reference_pair,
                   list(skeleton.names))

    def with_params(self, params: Dict[str, np.ndarray], **meta: Any) -> 'TrainedModel':
        return TrainedModel(dict(params), self.detector, self.predictor, self.frame_triple, self.reference_pair,
                            list(self.landmark_names), {**self.meta, **meta})

    def save(self, path, **meta: Any):
        payload = {
            'detector': self.detector.to_dict(),
            'predictor': self.predictor.to_dict(),
            'frame_triple': list(self.frame_triple),
            'reference_pair': list(self.reference_pair),
            'landmark_names': list(self.landmark_names),
            **self.meta,
            **meta,
        }
        return save_checkpoint(path, self.params, CHECKPOINT_KIND, payload)

    @classmethod
    def load(cls, path) -> 'TrainedModel':
        params, meta = load_checkpoint(path, CHECKPOINT_KIND)
        detector = DetectorConfig.from_dict(meta.pop('detector', None))
        predictor = PredictorConfig.from_dict(meta.pop('predictor', None))
        frame_triple = tuple(meta.pop('frame_triple'))
        reference_pair = tuple(meta.pop('reference_pair'))
        names = list(meta.pop('landmark_names', []))
        return cls(params, detector, predictor, frame_triple, reference_pair, names, meta)

    def detect(self, images) -> DetectorOutput:
        return detect(images, self.params, self.detector)

    def observe(self, images: np.ndarray, cameras: Sequence[CameraParams],
                params: Optional[Dict[str, Any]] = None) -> List[ViewObservation]:
        """
        Detect a stack of synchronized views.

        Args:
            images: (V, C, H, W) images, one per camera
            cameras: Matching cameras
            params: Override parameters (watched tensors during training)
        """
        output = detect(images, self.params if params is None else params, self.detector)
        return [ViewObservation(output.coordinates[v], output.features[v], camera, output.stride,
                                self.detector.num_primary)
                for v, camera in enumerate(cameras)]
