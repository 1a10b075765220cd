"""
Differentiable primitives for SecLand
Each op evaluates with numpy and records its vector-Jacobian products on the active tape
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.errors import ShapeError
from .tensor import Tensor, active_tape, as_tensor

Axis = Optional[Union[int, Tuple[int, ...]]]


def _emit(value: np.ndarray, parents: Sequence[Tensor], vjps) -> Tensor:
    tape = active_tape()
    if tape is None:
        return Tensor._wrap(value)
    return tape.record(value, parents, vjps)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform",
                         op=op, left=a.shape, right=b.shape)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise binary ops (numpy trailing-axis broadcasting)

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('add', a, b)
    return _emit(a.values + b.values, (a, b),
                 (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('sub', a, b)
    return _emit(a.values - b.values, (a, b),
                 (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('mul', a, b)
    return _emit(a.values * b.values, (a, b),
                 (lambda g: _unbroadcast(g * b.values, a.shape),
                  lambda g: _unbroadcast(g * a.values, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('div', a, b)
    out = a.values / b.values
    return _emit(out, (a, b),
                 (lambda g: _unbroadcast(g / b.values, a.shape),
                  lambda g: _unbroadcast(-g * out / b.values, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit(-a.values, (a,), (lambda g: -g,))


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit(a.values * c, (a,), (lambda g: g * c,))


# Linear algebra

def matmul(a, b) -> Tensor:
    """
    Matrix product with numpy semantics for operands of rank >= 1.

    Leading (batch) axes broadcast; gradients are summed back over them.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}",
                         op='matmul', left=a.shape, right=b.shape)
    inner_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if a.shape[-1] != inner_b:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform",
                         op='matmul', left=a.shape, right=b.shape)
    if a.ndim == 1 and b.ndim == 1:
        return dot(a, b)

    out = np.matmul(a.values, b.values)

    if b.ndim == 1:
        def grad_a(g):
            return _unbroadcast(g[..., None] * b.values, a.shape)

        def grad_b(g):
            return np.matmul(np.swapaxes(a.values, -1, -2), g[..., None])[..., 0].reshape(-1, b.shape[0]).sum(axis=0)
    elif a.ndim == 1:
        def grad_a(g):
            return np.matmul(b.values, g[..., None])[..., 0].reshape(-1, a.shape[0]).sum(axis=0)

        def grad_b(g):
            return _unbroadcast(a.values[:, None] * g[..., None, :], b.shape)
    else:
        def grad_a(g):
            return _unbroadcast(np.matmul(g, np.swapaxes(b.values, -1, -2)), a.shape)

        def grad_b(g):
            return _unbroadcast(np.matmul(np.swapaxes(a.values, -1, -2), g), b.shape)

    return _emit(out, (a, b), (grad_a, grad_b))


def dot(a, b) -> Tensor:
    """Inner product over the last axis"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape} differ",
                         op='dot', left=a.shape, right=b.shape)
    out = np.sum(a.values * b.values, axis=-1)
    return _emit(out, (a, b),
                 (lambda g: np.asarray(g)[..., None] * b.values,
                  lambda g: np.asarray(g)[..., None] * a.values))


def cross(a, b) -> Tensor:
    """Cross product over a last axis of length 3"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1:] != (3,) or b.shape[-1:] != (3,):
        raise ShapeError(f"cross: shapes {a.shape} and {b.shape} need a last axis of 3",
                         op='cross', left=a.shape, right=b.shape)
    _broadcast_shape('cross', a, b)
    out = np.cross(a.values, b.values)
    return _emit(out, (a, b),
                 (lambda g: _unbroadcast(np.cross(b.values, g), a.shape),
                  lambda g: _unbroadcast(np.cross(g, a.values), b.shape)))


def solve(m, r) -> Tensor:
    """
    Solve m @ x = r for x; m is (..., n, n), r is (..., n, k).
    """
    m, r = as_tensor(m), as_tensor(r)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2] or r.ndim != m.ndim or r.shape[-2] != m.shape[-1]:
        raise ShapeError(f"solve: shapes {m.shape} and {r.shape} do not conform",
                         op='solve', left=m.shape, right=r.shape)
    out = np.linalg.solve(m.values, r.values)
    m_t = np.swapaxes(m.values, -1, -2)

    def grad_m(g):
        return -np.matmul(np.linalg.solve(m_t, g), np.swapaxes(out, -1, -2))

    def grad_r(g):
        return np.linalg.solve(m_t, g)

    return _emit(out, (m, r), (grad_m, grad_r))


def l2_norm(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    norm = np.sqrt(np.sum(a.values * a.values, axis=axis))

    def grad(g):
        safe = np.where(norm > 0, norm, 1.0)
        scale = np.where(norm > 0, g / safe, 0.0)
        return np.expand_dims(scale, axis) * a.values

    return _emit(norm, (a,), (grad,))


# Reductions

def sum(a, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = np.sum(a.values, axis=axis, keepdims=keepdims)

    def grad(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()

    return _emit(np.asarray(out, dtype=np.float64), (a,), (grad,))


def mean(a, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return scalar_mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / max(count, 1))


# Elementwise unary ops

def square(a) -> Tensor:
    a = as_tensor(a)
    return _emit(a.values * a.values, (a,), (lambda g: 2.0 * g * a.values,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.values)
    return _emit(out, (a,), (lambda g: 0.5 * g / out,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.values)
    return _emit(out, (a,), (lambda g: g * out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.values)
    return _emit(out, (a,), (lambda g: g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.values > 0
    return _emit(np.where(mask, a.values, 0.0), (a,), (lambda g: g * mask,))


def clip(a, low: float, high: float) -> Tensor:
    """Clamp values; gradient passes only where the input was inside [low, high]"""
    a = as_tensor(a)
    inside = (a.values >= low) & (a.values <= high)
    return _emit(np.clip(a.values, low, high), (a,), (lambda g: g * inside,))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.values - np.max(a.values, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def grad(g):
        return out * (g - np.sum(g * out, axis=axis, keepdims=True))

    return _emit(out, (a,), (grad,))


def detach(a) -> Tensor:
    """Stop-gradient copy"""
    return Tensor._wrap(as_tensor(a).values)


# Shape ops

def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}",
                         op='reshape', left=a.shape, right=tuple(shape))
    return _emit(out, (a,), (lambda g: np.reshape(g, a.shape),))


def transpose(a, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _emit(np.transpose(a.values, axes), (a,), (lambda g: np.transpose(g, inverse),))


def index(a, key) -> Tensor:
    """Basic or fancy indexing; the gradient scatters back with accumulation"""
    a = as_tensor(a)
    out = a.values[key]

    def grad(g):
        full = np.zeros(a.shape)
        np.add.at(full, key, g)
        return full

    return _emit(np.array(out, dtype=np.float64), (a,), (grad,))


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather entries along one axis with a 1-D index array"""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1:
        raise ShapeError(f"take: indices must be 1-D, got shape {indices.shape}", op='take', left=a.shape)
    out = np.take(a.values, indices, axis=axis)

    def grad(g):
        full = np.zeros(a.shape)
        np.add.at(np.moveaxis(full, axis, 0), indices, np.moveaxis(g, axis, 0))
        return full

    return _emit(out, (a,), (grad,))


def concatenate(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concatenate: shapes {[t.shape for t in tensors]} do not conform on axis {axis}",
                         op='concatenate', shapes=[t.shape for t in tensors])
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def make(i):
        return lambda g: np.split(g, bounds, axis=axis)[i]

    return _emit(out, tensors, [make(i) for i in range(len(tensors))])


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: shapes {[t.shape for t in tensors]} differ",
                         op='stack', shapes=[t.shape for t in tensors])
    out = np.stack([t.values for t in tensors], axis=axis)

    def make(i):
        return lambda g: np.take(g, i, axis=axis)

    return _emit(out, tensors, [make(i) for i in range(len(tensors))])


def patches(x, kernel: int, stride: int, pad: int) -> Tensor:
    """
    Extract sliding k x k windows from (N, C, H, W) into (N, C*k*k, h*w).

    The local linear stages of the detector are a matmul against this layout.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"patches: expected (N, C, H, W), got {x.shape}", op='patches', left=x.shape)
    n, c, height, width = x.shape
    padded = np.pad(x.values, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out_h = (height + 2 * pad - kernel) // stride + 1
    out_w = (width + 2 * pad - kernel) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    out = np.ascontiguousarray(windows.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * kernel * kernel, out_h * out_w)

    def grad(g):
        g = g.reshape(n, c, kernel, kernel, out_h, out_w)
        full = np.zeros_like(padded)
        for di in range(kernel):
            for dj in range(kernel):
                full[:, :, di:di + stride * out_h:stride, dj:dj + stride * out_w:stride] += g[:, :, di, dj]
        return full[:, :, pad:pad + height, pad:pad + width]

    return _emit(out, (x,), (grad,))
