"""
Landmark detector for SecLand
Small strided conv stack producing a feature map, per-landmark heatmaps and soft-argmax coordinates
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..autodiff import Tensor, as_tensor
from ..autodiff import ops
from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..geometry import Pose2D
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError, NonFiniteError, ShapeError
from ..utils.logger import get_logger

logger = get_logger('core.detector')

PREFIX = 'detector'
CHECKPOINT_KIND = 'detector'


@dataclass
class DetectorConfig:
    image_size: int = 64
    channels: int = 3
    widths: Tuple[int, ...] = (16, 32, 32)
    strides: Tuple[int, ...] = (2, 2, 1)
    kernel: int = 3
    feature_dim: int = 32
    temperature: float = 1.0
    num_primary: int = 13
    num_secondary: int = 6
    init_scale: float = 1.0
    head_init: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.strides = tuple(int(s) for s in self.strides)
        if len(self.widths) != len(self.strides) or not self.widths:
            raise ConfigError("Detector widths and strides must be non-empty and of equal length")
        if self.kernel % 2 != 1:
            raise ConfigError(f"Detector kernel must be odd, got {self.kernel}")
        if self.temperature <= 0:
            raise ConfigError(f"Soft-argmax temperature must be positive, got {self.temperature}")
        if self.image_size % self.stride != 0:
            raise ConfigError(f"Image size {self.image_size} is not divisible by the overall stride {self.stride}")

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'DetectorConfig':
        return section_from_dict(cls, entry, 'detector')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def stride(self) -> int:
        return int(np.prod(self.strides))

    @property
    def heatmap_size(self) -> int:
        return self.image_size // self.stride

    @property
    def num_landmarks(self) -> int:
        return self.num_primary + self.num_secondary

    @property
    def num_channels(self) -> int:
        """Heatmap channels: one per landmark plus background"""
        return self.num_landmarks + 1


@dataclass
class DetectorOutput:
    """
    Batched forward result.

    heatmaps: (N, P+S+1, h, w) softmax-normalized per channel
    features: (N, n, h, w) penultimate activations
    coordinates: (N, P+S, 2) soft-argmax landmark positions in pixels
    """

    heatmaps: Tensor
    features: Tensor
    coordinates: Tensor
    num_primary: int
    stride: int

    def __len__(self) -> int:
        return self.coordinates.shape[0]

    def pose(self, index: int) -> Pose2D:
        return Pose2D.from_stacked(self.coordinates.values[index], self.num_primary)

    def poses(self) -> List[Pose2D]:
        return [self.pose(i) for i in range(len(self))]

    def feature_map(self, index: int) -> Tensor:
        return self.features[index]


def _param(name: str) -> str:
    return f"{PREFIX}/{name}"


def parameter_shapes(config: DetectorConfig) -> Dict[str, Tuple[int, ...]]:
    shapes = {}
    fan_in = config.channels
    for s, width in enumerate(config.widths):
        shapes[_param(f"stage{s}/weight")] = (width, fan_in * config.kernel * config.kernel)
        shapes[_param(f"stage{s}/bias")] = (width,)
        fan_in = width
    shapes[_param('features/weight')] = (config.feature_dim, fan_in)
    shapes[_param('features/bias')] = (config.feature_dim,)
    shapes[_param('heatmap/weight')] = (config.num_channels, config.feature_dim)
    shapes[_param('heatmap/bias')] = (config.num_channels,)
    return shapes


def init_detector_params(config: DetectorConfig, seed: Optional[int] = None) -> Dict[str, np.ndarray]:
    """
    He-scaled stage weights, zero biases.

    The heatmap head is scaled by head_init; the default 0 gives uniform
    heatmaps, so every soft-argmax starts at the image center.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith('bias'):
            params[name] = np.zeros(shape)
            continue
        std = config.init_scale * np.sqrt(2.0 / shape[1])
        if name == _param('heatmap/weight'):
            std = config.head_init * np.sqrt(1.0 / shape[1])
        params[name] = rng.normal(0.0, 1.0, size=shape) * std if std > 0 else np.zeros(shape)
    return params


def check_params(params: Dict[str, Any], config: DetectorConfig):
    for name, shape in parameter_shapes(config).items():
        if name not in params:
            raise ShapeError(f"Detector parameter {name} is missing", parameter=name)
        found = tuple(np.shape(params[name].values if isinstance(params[name], Tensor) else params[name]))
        if found != shape:
            raise ShapeError(f"Detector parameter {name} has shape {found}, expected {shape}",
                             parameter=name, left=found, right=shape)


def grid_to_pixel(grid: Union[Tensor, np.ndarray], stride: int) -> Tensor:
    """Heatmap-cell coordinates to pixels: cell g covers pixels [g*stride, (g+1)*stride)"""
    return ops.add(ops.scalar_mul(grid, float(stride)), 0.5 * (stride - 1))


def pixel_to_grid(pixels: Union[Tensor, np.ndarray], stride: int) -> Tensor:
    return ops.scalar_mul(ops.sub(pixels, 0.5 * (stride - 1)), 1.0 / stride)


def _cell_grid(height: int, width: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)


def soft_argmax(channel: Union[Tensor, np.ndarray], temperature: float = 1.0) -> Tensor:
    """
    Expected (x, y) cell position under softmax(channel / temperature).

    Args:
        channel: (h, w) heatmap logits
        temperature: Softmax temperature (> 0)

    Returns:
        2-vector in heatmap-grid coordinates
    """
    channel = as_tensor(channel)
    if channel.ndim != 2:
        raise ShapeError(f"soft_argmax expects an (h, w) channel, got {channel.shape}", left=channel.shape)
    height, width = channel.shape
    logits = ops.reshape(channel, (1, 1, height * width))
    return ops.reshape(_expected_cells(logits, height, width, temperature), (2,))


def _expected_cells(logits: Tensor, height: int, width: int, temperature: float) -> Tensor:
    """(N, C, h*w) logits to (N, C, 2) expected cell coordinates"""
    if temperature <= 0:
        raise ConfigError(f"Soft-argmax temperature must be positive, got {temperature}")
    probs = ops.softmax(ops.scalar_mul(logits, 1.0 / temperature), axis=-1)
    return ops.matmul(probs, _cell_grid(height, width))


def _stage(x: Tensor, weight: Tensor, bias: Tensor, kernel: int, stride: int) -> Tensor:
    n, _, height, width = x.shape
    columns = ops.patches(x, kernel, stride, kernel // 2)
    out_h = (height + 2 * (kernel // 2) - kernel) // stride + 1
    out_w = (width + 2 * (kernel // 2) - kernel) // stride + 1
    z = ops.add(ops.matmul(weight, columns), ops.reshape(bias, (-1, 1)))
    return ops.reshape(ops.relu(z), (n, weight.shape[0], out_h, out_w))


def _pointwise(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """1x1 projection of (N, C, L) to (N, C', L)"""
    return ops.add(ops.matmul(weight, x), ops.reshape(bias, (-1, 1)))


def detect(images: Union[Tensor, np.ndarray], params: Dict[str, Any], config: DetectorConfig) -> DetectorOutput:
    """
    Forward pass over a batch of images.

    Args:
        images: (N, C, H, W) or a single (C, H, W) image with values in [0, 1]
        params: Parameter arrays or watched tensors keyed by path
        config: Detector architecture

    Returns:
        DetectorOutput with heatmaps, features and pixel coordinates
    """
    images = as_tensor(images)
    if images.ndim == 3:
        images = ops.reshape(images, (1,) + images.shape)
    expected = (config.channels, config.image_size, config.image_size)
    if images.ndim != 4 or images.shape[1:] != expected:
        raise ShapeError(f"Detector expects images of shape (N, {expected[0]}, {expected[1]}, {expected[2]}), "
                         f"got {images.shape}", left=images.shape, right=expected)
    if not np.all(np.isfinite(images.values)):
        raise NonFiniteError("Detector input images contain non-finite values")
    check_params(params, config)
    p = {name: as_tensor(value) for name, value in params.items() if name.startswith(PREFIX + '/')}

    x = images
    for s, stride in enumerate(config.strides):
        x = _stage(x, p[_param(f"stage{s}/weight")], p[_param(f"stage{s}/bias")], config.kernel, stride)

    n, _, height, width = x.shape
    flat = ops.reshape(x, (n, x.shape[1], height * width))
    features = ops.tanh(_pointwise(flat, p[_param('features/weight')], p[_param('features/bias')]))
    logits = _pointwise(features, p[_param('heatmap/weight')], p[_param('heatmap/bias')])

    heatmaps = ops.softmax(ops.scalar_mul(logits, 1.0 / config.temperature), axis=-1)
    cells = _expected_cells(logits[:, :config.num_landmarks], height, width, config.temperature)
    coordinates = grid_to_pixel(cells, config.stride)

    return DetectorOutput(
        heatmaps=ops.reshape(heatmaps, (n, config.num_channels, height, width)),
        features=ops.reshape(features, (n, config.feature_dim, height, width)),
        coordinates=coordinates,
        num_primary=config.num_primary,
        stride=config.stride,
    )


def sample_features(features: Tensor, pixels: Union[Tensor, np.ndarray], stride: int,
                    image_size: Optional[Tuple[int, int]] = None) -> Tuple[Tensor, np.ndarray]:
    """
    Bilinear lookup of a feature map at pixel positions.

    Positions are mapped to heatmap-grid coordinates and clamped to the grid;
    clamped coordinates carry no gradient.

    Args:
        features: (n, h, w) feature map
        pixels: (K, 2) positions in pixels
        stride: Pixels per heatmap cell
        image_size: (width, height) used for the out-of-bounds flag; defaults to grid extent * stride

    Returns:
        ((K, n) sampled features, (K,) out-of-bounds flags)
    """
    features = as_tensor(features)
    pixels = ops.reshape(as_tensor(pixels), (-1, 2))
    if features.ndim != 3:
        raise ShapeError(f"Feature map must be (n, h, w), got {features.shape}", left=features.shape)
    _, height, width = features.shape
    if image_size is None:
        image_size = (width * stride, height * stride)
    raw = pixels.values
    out_of_bounds = (raw[:, 0] < 0) | (raw[:, 0] > image_size[0] - 1) | \
                    (raw[:, 1] < 0) | (raw[:, 1] > image_size[1] - 1)
    if np.any(out_of_bounds):
        logger.debug(f"{int(out_of_bounds.sum())} feature samples outside the image were clamped")

    grid = pixel_to_grid(pixels, stride)
    gx = ops.clip(grid[:, 0], 0.0, width - 1.0)
    gy = ops.clip(grid[:, 1], 0.0, height - 1.0)
    x0 = np.clip(np.floor(gx.values), 0, max(width - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(gy.values), 0, max(height - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = ops.sub(gx, x0.astype(np.float64))
    fy = ops.sub(gy, y0.astype(np.float64))
    ex = ops.sub(1.0, fx)
    ey = ops.sub(1.0, fy)

    def corner(ys, xs):
        return ops.index(features, (slice(None), ys, xs))

    sampled = ops.add(
        ops.add(ops.mul(corner(y0, x0), ops.mul(ex, ey)), ops.mul(corner(y0, x1), ops.mul(fx, ey))),
        ops.add(ops.mul(corner(y1, x0), ops.mul(ex, fy)), ops.mul(corner(y1, x1), ops.mul(fx, fy))),
    )
    return ops.transpose(sampled), out_of_bounds


def sample_feature(features: Tensor, pixel: Union[Tensor, np.ndarray], stride: int,
                   image_size: Optional[Tuple[int, int]] = None) -> Tuple[Tensor, bool]:
    """Feature vector Phi(x, I) at one pixel position, plus its out-of-bounds flag"""
    sampled, flags = sample_features(features, ops.reshape(as_tensor(pixel), (1, 2)), stride, image_size)
    return ops.reshape(sampled, (sampled.shape[1],)), bool(flags[0])


def save_detector(path, params: Dict[str, np.ndarray], config: DetectorConfig,
                  meta: Optional[Dict[str, Any]] = None):
    detector_params = {k: v for k, v in params.items() if k.startswith(PREFIX + '/')}
    check_params(detector_params, config)
    return save_checkpoint(path, detector_params, CHECKPOINT_KIND, {'config': config.to_dict(), **(meta or {})})


def load_detector(path) -> Tuple[Dict[str, np.ndarray], DetectorConfig]:
    params, meta = load_checkpoint(path, CHECKPOINT_KIND)
    config = DetectorConfig.from_dict(meta.get('config'))
    check_params(params, config)
    return params, config
