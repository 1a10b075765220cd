#!/usr/bin/env python3
"""
Autodiff tests for SecLand - tape, primitive gradients, optimizer and checkpoints
"""

import sys
import tempfile
import traceback
from pathlib import Path

import numpy as np

from secland.autodiff import Adam, Tape, Tensor, constant, decayed_learning_rate, load_checkpoint, save_checkpoint
from secland.autodiff import ops
from secland.autodiff.gradcheck import analytic_gradients, max_relative_error, numerical_gradients
from secland.utils.errors import NonFiniteError, SchemaVersionError, ShapeError

TOLERANCE = 1e-4


def _check(loss_fn, params):
    analytic = analytic_gradients(loss_fn, params)
    numeric = numerical_gradients(loss_fn, params)
    error = max_relative_error(analytic, numeric)
    assert error < TOLERANCE, f"relative gradient error {error:.2e}"


def test_elementwise_and_broadcast_gradients():
    rng = np.random.default_rng(0)
    params = {'a': rng.normal(size=(3, 4)), 'b': rng.normal(size=(4,))}

    def loss(p):
        x = ops.add(ops.mul(p['a'], p['b']), ops.div(p['b'], ops.add(ops.square(p['a']), 1.0)))
        return ops.sum(ops.tanh(ops.sub(x, ops.exp(ops.scalar_mul(p['b'], 0.1)))))

    _check(loss, params)


def test_matmul_softmax_norm_gradients():
    rng = np.random.default_rng(1)
    params = {'w': rng.normal(size=(5, 3)), 'x': rng.normal(size=(2, 5))}

    def loss(p):
        h = ops.softmax(ops.matmul(p['x'], p['w']), axis=-1)
        return ops.add(ops.sum(ops.l2_norm(h, axis=-1)), ops.mean(ops.square(p['w'])))

    _check(loss, params)


def test_cross_and_solve_gradients():
    rng = np.random.default_rng(2)
    params = {
        'u': rng.normal(size=(4, 3)),
        'v': rng.normal(size=(4, 3)),
        'm': np.eye(3) * 3.0 + 0.1 * rng.normal(size=(3, 3)),
    }
    rhs = rng.normal(size=(3, 2))

    def loss(p):
        c = ops.cross(p['u'], p['v'])
        x = ops.solve(p['m'], rhs)
        return ops.add(ops.sum(ops.square(c)), ops.sum(ops.mul(x, x)))

    _check(loss, params)


def test_patches_gradient():
    rng = np.random.default_rng(3)
    params = {'x': rng.normal(size=(1, 2, 5, 5)), 'k': rng.normal(size=(3, 2 * 3 * 3))}

    def loss(p):
        windows = ops.patches(p['x'], kernel=3, stride=2, pad=1)
        return ops.sum(ops.relu(ops.matmul(p['k'], windows)))

    _check(loss, params)


def test_shape_ops_gradients():
    rng = np.random.default_rng(4)
    params = {'a': rng.normal(size=(2, 3)), 'b': rng.normal(size=(2, 3))}

    def loss(p):
        joined = ops.concatenate([p['a'], p['b']], axis=0)
        stacked = ops.stack([p['a'], p['b']], axis=0)
        picked = ops.take(joined, [0, 3, 3], axis=0)
        return ops.add(ops.sum(ops.square(picked)),
                       ops.sum(ops.mul(ops.transpose(ops.reshape(stacked, (2, 6))), 0.5)))

    _check(loss, params)


def test_detach_blocks_gradient():
    with Tape() as tape:
        x = tape.watch(np.array([1.0, 2.0]))
        loss = ops.sum(ops.mul(ops.detach(x), x))
    grad = tape.backward(loss).arrays({'x': x})['x']
    assert np.allclose(grad, [1.0, 2.0])


def test_unreached_leaf_gets_zero_gradient():
    with Tape() as tape:
        x = tape.watch(np.ones(3))
        y = tape.watch(np.ones(2))
        loss = ops.sum(ops.square(x))
    grads = tape.backward(loss)
    assert np.allclose(grads.of(y).numpy(), 0.0)
    outside = constant(np.ones(4))
    assert np.allclose(grads.of(outside).numpy(), 0.0)
    assert grads.detached == [(4,)]


def test_backward_needs_scalar():
    with Tape() as tape:
        x = tape.watch(np.ones(3))
        y = ops.square(x)
    try:
        tape.backward(y)
    except ShapeError:
        return
    raise AssertionError("non-scalar loss should raise ShapeError")


def test_operator_overloads_record_on_tape():
    with Tape() as tape:
        x = tape.watch(np.array(3.0))
        y = (x * x + 2.0 * x - 1.0) / 2.0
    grad = tape.backward(y).arrays({'x': x})['x']
    assert abs(y.item() - 7.0) < 1e-12
    assert abs(float(grad) - 4.0) < 1e-12


def test_decayed_learning_rate():
    assert decayed_learning_rate(1e-4, 0, 0.8, 2000) == 1e-4
    assert abs(decayed_learning_rate(1e-4, 1999, 0.8, 2000) - 1e-4) < 1e-18
    assert abs(decayed_learning_rate(1e-4, 4000, 0.8, 2000) - 0.64e-4) < 1e-15


def test_adam_minimizes_quadratic():
    params = {'x': np.array([3.0, -2.0])}
    optimizer = Adam(learning_rate=0.1)
    for _ in range(500):
        grads = {'x': 2.0 * (params['x'] - np.array([1.0, 1.0]))}
        params = optimizer.step(params, grads)
    assert np.allclose(params['x'], [1.0, 1.0], atol=1e-2)
    assert optimizer.step_count == 500


def test_adam_rejects_non_finite_gradient():
    optimizer = Adam()
    try:
        optimizer.step({'x': np.zeros(2)}, {'x': np.array([np.nan, 0.0])})
    except NonFiniteError:
        return
    raise AssertionError("NaN gradient should raise NonFiniteError")


def test_checkpoint_preserves_parameters():
    params = {'a/weight': np.arange(6.0).reshape(2, 3), 'a/bias': np.array([0.5, -0.25])}
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(Path(tmp) / 'model.json', params, 'test', {'step': 3})
        loaded, meta = load_checkpoint(path, 'test')
    assert meta == {'step': 3}
    for name, value in params.items():
        assert loaded[name].shape == value.shape
        assert np.array_equal(loaded[name], value)


def test_checkpoint_rejects_other_schema_version():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'old.json'
        path.write_text('{"version": 999, "kind": "test", "parameters": {}}')
        try:
            load_checkpoint(path)
        except SchemaVersionError:
            return
    raise AssertionError("unknown schema version should raise SchemaVersionError")


def test_tensor_getitem_gradient():
    with Tape() as tape:
        x = tape.watch(np.arange(6.0).reshape(2, 3))
        loss = ops.sum(ops.square(x[1]))
    grad = tape.backward(loss).arrays({'x': x})['x']
    assert np.allclose(grad, [[0, 0, 0], [6, 8, 10]])
    assert isinstance(loss, Tensor)


def main():
    tests = [(name, fn) for name, fn in globals().items() if name.startswith('test_') and callable(fn)]
    passed = failed = 0
    for name, fn in tests:
        try:
            fn()
            print(f"✅ {name}")
            passed += 1
        except Exception:
            print(f"❌ {name}")
            traceback.print_exc()
            failed += 1
    print(f"\nAUTODIFF TESTS: {passed} passed, {failed} failed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
