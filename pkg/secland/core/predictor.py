"""
Secondary-landmark predictor for SecLand
MLP from canonical primary landmarks to canonical secondary landmarks
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..autodiff import Tensor, as_tensor
from ..autodiff import ops
from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..geometry import CanonicalFrame, SimilarityTransform
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError, NonFiniteError, ShapeError

PREFIX = 'predictor'
CHECKPOINT_KIND = 'predictor'
ACTIVATIONS = ('tanh', 'relu')


@dataclass
class PredictorConfig:
    hidden: Tuple[int, ...] = (128, 128, 128)
    activation: str = 'tanh'
    num_primary: int = 13
    num_secondary: int = 6
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"Unknown activation '{self.activation}' (choose from {', '.join(ACTIVATIONS)})")
        if any(h <= 0 for h in self.hidden):
            raise ConfigError(f"Hidden widths must be positive, got {self.hidden}")

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'PredictorConfig':
        return section_from_dict(cls, entry, 'predictor')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (3 * self.num_primary,) + self.hidden + (3 * self.num_secondary,)


def _layer_names(config: PredictorConfig):
    count = len(config.layer_sizes) - 1
    return [f"{PREFIX}/layer{i}" if i < count - 1 else f"{PREFIX}/output" for i in range(count)]


def parameter_shapes(config: PredictorConfig) -> Dict[str, Tuple[int, ...]]:
    sizes = config.layer_sizes
    shapes = {}
    for i, name in enumerate(_layer_names(config)):
        shapes[f"{name}/weight"] = (sizes[i], sizes[i + 1])
        shapes[f"{name}/bias"] = (sizes[i + 1],)
    return shapes


def init_predictor_params(config: PredictorConfig, seed: Optional[int] = None,
                          zero_output: bool = False) -> Dict[str, np.ndarray]:
    """Glorot-normal weights and zero biases; zero_output zeroes the final layer"""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith('bias') or (zero_output and name.startswith(f"{PREFIX}/output")):
            params[name] = np.zeros(shape)
            continue
        std = config.init_scale * np.sqrt(2.0 / (shape[0] + shape[1]))
        params[name] = rng.normal(0.0, std, size=shape)
    return params


def check_params(params: Dict[str, Any], config: PredictorConfig):
    for name, shape in parameter_shapes(config).items():
        if name not in params:
            raise ShapeError(f"Predictor parameter {name} is missing", parameter=name)
        value = params[name]
        found = tuple(np.shape(value.values if isinstance(value, Tensor) else value))
        if found != shape:
            raise ShapeError(f"Predictor parameter {name} has shape {found}, expected {shape}",
                             parameter=name, left=found, right=shape)


def predict_secondary(params: Dict[str, Any], primary: Union[Tensor, np.ndarray],
                      config: PredictorConfig) -> Tensor:
    """
    Map canonical primary landmarks to canonical secondary landmarks.

    Args:
        params: Predictor parameters (arrays or watched tensors)
        primary: (P, 3) or batched (B, P, 3) canonical primary landmarks
        config: Predictor architecture

    Returns:
        (S, 3) or (B, S, 3) canonical secondary landmarks
    """
    primary = as_tensor(primary)
    if not np.all(np.isfinite(primary.values)):
        raise NonFiniteError("Predictor input contains non-finite coordinates")
    single = primary.ndim == 2
    if primary.shape[-2:] != (config.num_primary, 3):
        raise ShapeError(f"Predictor expects ({config.num_primary}, 3) primary landmarks, got {primary.shape}",
                         left=primary.shape)
    check_params(params, config)
    batch = 1 if single else primary.shape[0]
    h = ops.reshape(primary, (batch, 3 * config.num_primary))

    names = _layer_names(config)
    for i, name in enumerate(names):
        h = ops.add(ops.matmul(h, as_tensor(params[f"{name}/weight"])), as_tensor(params[f"{name}/bias"]))
        if i < len(names) - 1:
            h = ops.tanh(h) if config.activation == 'tanh' else ops.relu(h)

    shape = (config.num_secondary, 3) if single else (batch, config.num_secondary, 3)
    return ops.reshape(h, shape)


def denormalize_prediction(prediction: Union[Tensor, np.ndarray],
                           transform: Union[SimilarityTransform, CanonicalFrame]):
    """
    Bring canonical predictions back to world coordinates.

    A SimilarityTransform yields a plain array; a CanonicalFrame keeps the
    result on the tape so gradients reach the triangulated primaries.
    """
    if isinstance(transform, CanonicalFrame):
        return transform.to_world(prediction)
    values = prediction.numpy() if isinstance(prediction, Tensor) else np.asarray(prediction, dtype=np.float64)
    return transform.invert(values)


def regression_loss(params: Dict[str, Any], primary: Union[Tensor, np.ndarray],
                    secondary: Union[Tensor, np.ndarray], config: PredictorConfig) -> Tensor:
    """Summed squared canonical error of predictions against (B, S, 3) targets"""
    predicted = predict_secondary(params, primary, config)
    return ops.sum(ops.square(ops.sub(predicted, secondary)))


def save_predictor(path, params: Dict[str, np.ndarray], config: PredictorConfig,
                   meta: Optional[Dict[str, Any]] = None):
    predictor_params = {k: v for k, v in params.items() if k.startswith(PREFIX + '/')}
    check_params(predictor_params, config)
    return save_checkpoint(path, predictor_params, CHECKPOINT_KIND, {'config': config.to_dict(), **(meta or {})})


def load_predictor(path) -> Tuple[Dict[str, np.ndarray], PredictorConfig]:
    params, meta = load_checkpoint(path, CHECKPOINT_KIND)
    config = PredictorConfig.from_dict(meta.get('config'))
    check_params(params, config)
    return params, config
