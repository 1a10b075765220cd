"""
Finite-difference gradient checks for SecLand
"""

from typing import Callable, Dict, Mapping

import numpy as np

from .tensor import Tape, Tensor


def analytic_gradients(loss_fn: Callable[[Dict[str, Tensor]], Tensor],
                       params: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    with Tape() as tape:
        watched = tape.watch_all(params)
        loss = loss_fn(watched)
    return tape.backward(loss).arrays(watched)


def numerical_gradients(loss_fn: Callable[[Dict[str, Tensor]], Tensor],
                        params: Mapping[str, np.ndarray], h: float = 1e-5) -> Dict[str, np.ndarray]:
    """Central differences, one coordinate at a time"""
    base = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    grads = {}
    for name, value in base.items():
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = loss_fn({k: Tensor(v) for k, v in base.items()}).item()
            flat[i] = original - h
            lower = loss_fn({k: Tensor(v) for k, v in base.items()}).item()
            flat[i] = original
            grad.reshape(-1)[i] = (upper - lower) / (2.0 * h)
        grads[name] = grad
    return grads


def max_relative_error(analytic: Mapping[str, np.ndarray], numeric: Mapping[str, np.ndarray],
                       floor: float = 1e-8) -> float:
    """
    Largest elementwise |a - n| / max(|a|, |n|), skipping entries where both are below floor.
    """
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        scale = np.maximum(np.abs(a), np.abs(n))
        mask = scale >= floor
        if np.any(mask):
            worst = max(worst, float(np.max(np.abs(a - n)[mask] / scale[mask])))
    return worst
