"""
Tensor and gradient tape for SecLand
Reverse-mode differentiation over dense float64 arrays with a dynamic tape
"""

import threading
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import ShapeError
from ..utils.logger import get_logger

logger = get_logger('autodiff')

_local = threading.local()


def _tape_stack() -> List['Tape']:
    stack = getattr(_local, 'stack', None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional['Tape']:
    """Return the innermost tape recording on this thread, if any"""
    stack = _tape_stack()
    return stack[-1] if stack else None


def _frozen(value) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if array is value:
        array = array.view()
    array.flags.writeable = False
    return array


class Tensor:
    """
    Immutable float64 array with an optional handle into a gradient tape.

    Tensors created outside a tape (or by ops whose inputs are all untracked)
    carry no handle and behave as constants.
    """

    __slots__ = ('values', 'node', 'tape')

    def __init__(self, values, node: Optional[int] = None, tape: Optional['Tape'] = None):
        self.values = _frozen(np.array(values, dtype=np.float64))
        self.node = node
        self.tape = tape

    @classmethod
    def _wrap(cls, values: np.ndarray, node: Optional[int] = None,
              tape: Optional['Tape'] = None) -> 'Tensor':
        tensor = cls.__new__(cls)
        tensor.values = _frozen(values)
        tensor.node = node
        tensor.tape = tape
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def tracked(self) -> bool:
        return self.node is not None

    def numpy(self) -> np.ndarray:
        return np.array(self.values)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}",
                             shape=self.shape)
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        handle = f", node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{handle})"

    def __len__(self) -> int:
        return self.shape[0]

    # Operator sugar; the primitives live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)


class _Node:
    __slots__ = ('parents', 'vjps', 'shape', 'leaf')

    def __init__(self, parents: Tuple[Optional[int], ...], vjps: Tuple[Callable, ...],
                 shape: Tuple[int, ...], leaf: bool = False):
        self.parents = parents
        self.vjps = vjps
        self.shape = shape
        self.leaf = leaf


class GradientMap(dict):
    """
    Gradients of a scalar loss keyed by leaf node handle.

    `of()` looks a tensor up and returns zeros for tensors the loss does not
    reach; tensors that were never on the tape are additionally listed in
    `detached`.
    """

    def __init__(self, tape: 'Tape'):
        super().__init__()
        self.tape = tape
        self.detached: List[Tuple[int, ...]] = []

    def of(self, tensor: Tensor) -> Tensor:
        if tensor.node is None or tensor.tape is not self.tape:
            self.detached.append(tensor.shape)
            logger.warning(f"Gradient requested for a detached tensor of shape {tensor.shape}; returning zeros")
            return Tensor._wrap(np.zeros(tensor.shape))
        grad = self.get(tensor.node)
        if grad is None:
            return Tensor._wrap(np.zeros(tensor.shape))
        return grad

    def arrays(self, watched: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
        """Gradients for a named parameter set as plain arrays"""
        return {name: self.of(tensor).numpy() for name, tensor in watched.items()}


class Tape:
    """
    Ordered record of primitive operations.

    Nodes are appended as ops execute, so every node's parents precede it.
    A tape is single-threaded; use one tape per worker.
    """

    def __init__(self):
        self._nodes: List[_Node] = []

    def __enter__(self) -> 'Tape':
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def watch(self, value) -> Tensor:
        """Register a leaf (a trainable parameter or an input to differentiate against)"""
        array = value.values if isinstance(value, Tensor) else value
        self._nodes.append(_Node((), (), np.shape(array), leaf=True))
        return Tensor._wrap(np.asarray(array, dtype=np.float64), len(self._nodes) - 1, self)

    def watch_all(self, params: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
        return {name: self.watch(array) for name, array in params.items()}

    def record(self, value: np.ndarray, parents: Sequence[Tensor],
               vjps: Sequence[Callable[[np.ndarray], np.ndarray]]) -> Tensor:
        handles = tuple(p.node if (p.node is not None and p.tape is self) else None for p in parents)
        if all(h is None for h in handles):
            return Tensor._wrap(value)
        self._nodes.append(_Node(handles, tuple(vjps), np.shape(value)))
        return Tensor._wrap(value, len(self._nodes) - 1, self)

    def backward(self, loss: Tensor) -> GradientMap:
        """
        Accumulate d(loss)/d(leaf) for every leaf the loss depends on.

        Args:
            loss: Scalar tensor recorded on this tape

        Returns:
            GradientMap keyed by leaf handle
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}", shape=loss.shape)

        grads = GradientMap(self)
        if loss.node is None or loss.tape is not self:
            logger.warning("Loss is not recorded on this tape; all gradients are zero")
            grads.detached.append(loss.shape)
            return grads

        adjoints: Dict[int, np.ndarray] = {loss.node: np.ones(loss.shape)}
        for handle in range(loss.node, -1, -1):
            g = adjoints.pop(handle, None)
            if g is None:
                continue
            node = self._nodes[handle]
            if node.leaf:
                grads[handle] = Tensor._wrap(g)
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if parent is None:
                    continue
                contribution = vjp(g)
                if parent in adjoints:
                    adjoints[parent] = adjoints[parent] + contribution
                else:
                    adjoints[parent] = contribution
        return grads


def constant(values) -> Tensor:
    """Untracked tensor"""
    return Tensor(values)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def values_of(items: Iterable[Tensor]) -> List[np.ndarray]:
    return [t.values for t in items]
