"""
Reverse-mode automatic differentiation for SecLand
"""

from .tensor import GradientMap, Tape, Tensor, active_tape, as_tensor, constant
from .optim import Adam, decayed_learning_rate
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    'Adam', 'GradientMap', 'Tape', 'Tensor', 'active_tape', 'as_tensor', 'constant',
    'decayed_learning_rate', 'load_checkpoint', 'save_checkpoint',
]
