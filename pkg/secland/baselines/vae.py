"""
VAE module for SecLand
Pose-vector variational autoencoder that imputes missing secondary coordinates
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import Adam, Tape, Tensor, as_tensor
from ..autodiff import ops
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError, NonFiniteError
from .base import BaseMethod

LAYERS = ('encoder', 'mean', 'log_variance', 'decoder', 'output')


@dataclass
class VaeConfig:
    latent: int = 8
    hidden: int = 64
    steps: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    kl_weight: float = 1.0
    impute_iterations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.latent < 1 or self.hidden < 1 or self.batch_size < 1:
            raise ConfigError("VAE latent, hidden and batch_size must be at least 1")
        if self.steps < 0 or self.learning_rate <= 0 or self.kl_weight < 0 or self.impute_iterations < 1:
            raise ConfigError("VAE needs steps >= 0, learning_rate > 0, kl_weight >= 0, impute_iterations >= 1")

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'VaeConfig':
        return section_from_dict(cls, entry, 'vae')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def gaussian_kl(mean: Union[Tensor, np.ndarray], log_variance: Union[Tensor, np.ndarray]) -> Tensor:
    """KL(N(mean, exp(log_variance)) || N(0, I)) summed over all entries"""
    mean, log_variance = as_tensor(mean), as_tensor(log_variance)
    terms = ops.sub(ops.add(ops.square(mean), ops.exp(log_variance)), ops.add(log_variance, 1.0))
    return ops.scalar_mul(ops.sum(terms), 0.5)


def reconstruction_error(target: Union[Tensor, np.ndarray], reconstruction: Union[Tensor, np.ndarray]) -> Tensor:
    return ops.sum(ops.square(ops.sub(as_tensor(target), as_tensor(reconstruction))))


def init_vae_params(config: VaeConfig, dimension: int, seed: Optional[int] = None) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    shapes = {
        'encoder': (dimension, config.hidden),
        'mean': (config.hidden, config.latent),
        'log_variance': (config.hidden, config.latent),
        'decoder': (config.latent, config.hidden),
        'output': (config.hidden, dimension),
    }
    params = {}
    for name, (fan_in, fan_out) in shapes.items():
        scale = 0.0 if name == 'log_variance' else np.sqrt(2.0 / (fan_in + fan_out))
        params[f"vae/{name}/weight"] = rng.normal(0.0, scale, size=(fan_in, fan_out)) if scale else \
            np.zeros((fan_in, fan_out))
        params[f"vae/{name}/bias"] = np.zeros(fan_out)
    return params


def _dense(params: Dict[str, Any], name: str, x: Tensor) -> Tensor:
    return ops.add(ops.matmul(x, as_tensor(params[f"vae/{name}/weight"])), as_tensor(params[f"vae/{name}/bias"]))


def encode(params: Dict[str, Any], x: Union[Tensor, np.ndarray]) -> Tuple[Tensor, Tensor]:
    h = ops.tanh(_dense(params, 'encoder', as_tensor(x)))
    return _dense(params, 'mean', h), _dense(params, 'log_variance', h)


def decode(params: Dict[str, Any], z: Union[Tensor, np.ndarray]) -> Tensor:
    return _dense(params, 'output', ops.tanh(_dense(params, 'decoder', as_tensor(z))))


def elbo_loss(params: Dict[str, Any], x: np.ndarray, noise: np.ndarray, kl_weight: float = 1.0) -> Tuple[Tensor, Tensor]:
    """
    Negative evidence lower bound with reparameterized sampling

    Returns:
        (reconstruction term, KL term)
    """
    mean, log_variance = encode(params, x)
    z = ops.add(mean, ops.mul(ops.exp(ops.scalar_mul(log_variance, 0.5)), noise))
    return reconstruction_error(x, decode(params, z)), ops.scalar_mul(gaussian_kl(mean, log_variance), kl_weight)


class VaeMethod(BaseMethod):
    """Encodes a mean-filled query, decodes it and reads back the secondary coordinates"""

    def __init__(self, config: Optional[VaeConfig] = None, logger=None):
        super().__init__(config or VaeConfig(), logger)
        self.params: Optional[Dict[str, np.ndarray]] = None
        self.offset: Optional[np.ndarray] = None
        self.scale: Optional[np.ndarray] = None
        self.history = []

    @property
    def fitted(self) -> bool:
        return self.params is not None

    def _fit(self, training: np.ndarray):
        config = self.config
        self.offset = training.mean(axis=0)
        self.scale = np.maximum(training.std(axis=0), 1e-8)
        data = (training - self.offset) / self.scale
        params = init_vae_params(config, data.shape[1])
        optimizer = Adam(config.learning_rate)
        rng = np.random.default_rng(config.seed)
        self.history = []
        for step in range(config.steps):
            batch = data[rng.choice(data.shape[0], size=min(config.batch_size, data.shape[0]), replace=False)]
            noise = rng.standard_normal((batch.shape[0], config.latent))
            with Tape() as tape:
                watched = tape.watch_all(params)
                reconstruction, kl = elbo_loss(watched, batch, noise, config.kl_weight)
                loss = ops.scalar_mul(ops.add(reconstruction, kl), 1.0 / batch.shape[0])
            if not np.isfinite(loss.item()):
                raise NonFiniteError(f"VAE loss became non-finite at step {step}", step=step)
            params = optimizer.step(params, tape.backward(loss).arrays(watched))
            self.history.append(loss.item())
        self.params = params
        if self.history:
            self.log_debug(f"Trained {config.steps} steps, final loss {self.history[-1]:.4f}")

    def _impute(self, primary: np.ndarray) -> np.ndarray:
        queries = np.tile(self.offset, (primary.shape[0], 1))
        queries[:, self.primary_columns] = primary
        data = (queries - self.offset) / self.scale
        observed = data[:, self.primary_columns]
        for _ in range(self.config.impute_iterations):
            mean, _ = encode(self.params, data)
            data = decode(self.params, mean).numpy()
            data[:, self.primary_columns] = observed
        completed = data * self.scale + self.offset
        return completed[:, self.secondary_columns]


def vae_impute(training: np.ndarray, primary_columns: Sequence[int], query_primary: np.ndarray,
               config: Optional[VaeConfig] = None) -> np.ndarray:
    """Fit a VAE on complete training poses and impute the secondary columns of (Q, |primary|) queries"""
    method = VaeMethod(config).fit(training, primary_columns)
    return method.impute(np.atleast_2d(query_primary))
