"""
Optimizers for SecLand
Adaptive-moment updates with an exponential step-decay learning rate
"""

from typing import Dict, Mapping

import numpy as np

from ..utils.errors import NonFiniteError


def decayed_learning_rate(base_rate: float, step: int, decay_rate: float, decay_steps: int) -> float:
    """lr(step) = base_rate * decay_rate ** floor(step / decay_steps)"""
    return base_rate * decay_rate ** (step // decay_steps)


class Adam:
    """Adam with the usual defaults; parameters are replaced, never mutated in place"""

    def __init__(self, learning_rate: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8, decay_rate: float = 1.0, decay_steps: int = 1):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.decay_rate = decay_rate
        self.decay_steps = max(int(decay_steps), 1)
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    @property
    def current_rate(self) -> float:
        return decayed_learning_rate(self.learning_rate, self.step_count, self.decay_rate, self.decay_steps)

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """
        Apply one update.

        Args:
            params: Current parameter arrays by path
            grads: Gradients by path; parameters without a gradient are left unchanged

        Returns:
            New parameter dictionary
        """
        rate = self.current_rate
        self.step_count += 1
        t = self.step_count
        updated = {}
        for name, value in params.items():
            grad = grads.get(name)
            if grad is None:
                updated[name] = value
                continue
            if not np.all(np.isfinite(grad)):
                raise NonFiniteError(f"Non-finite gradient for parameter {name}", parameter=name)
            m = self._m.get(name, np.zeros_like(value))
            v = self._v.get(name, np.zeros_like(value))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self._m[name] = m
            self._v[name] = v
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            updated[name] = value - rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return updated
