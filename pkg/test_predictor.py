#!/usr/bin/env python3
"""
Predictor tests for SecLand - canonical MLP shapes, gradients and round trips
"""

import sys
import tempfile
import traceback
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from secland.autodiff.gradcheck import analytic_gradients, max_relative_error, numerical_gradients
from secland.core.predictor import (
    PredictorConfig, denormalize_prediction, init_predictor_params, load_predictor, predict_secondary,
    regression_loss, save_predictor,
)
from secland.geometry import SimilarityTransform, canonical_frame
from secland.utils.errors import ConfigError, NonFiniteError, ShapeError

SMALL = PredictorConfig(hidden=(6, 5), num_primary=3, num_secondary=2, seed=1)


def _expect(error, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except error:
        return
    raise AssertionError(f"{fn.__name__} should raise {error.__name__}")


def test_single_and_batched_shapes_agree():
    params = init_predictor_params(SMALL)
    batch = np.random.default_rng(0).normal(size=(4, 3, 3))
    together = predict_secondary(params, batch, SMALL).numpy()
    assert together.shape == (4, 2, 3)
    for i in range(4):
        assert np.allclose(predict_secondary(params, batch[i], SMALL).numpy(), together[i])


def test_layer_sizes_follow_landmark_counts():
    config = PredictorConfig()
    assert config.layer_sizes == (39, 128, 128, 128, 18)
    params = init_predictor_params(config)
    assert params['predictor/layer0/weight'].shape == (39, 128)
    assert params['predictor/output/weight'].shape == (128, 18)


def test_zero_output_predicts_origin():
    params = init_predictor_params(SMALL, zero_output=True)
    primary = np.random.default_rng(1).normal(size=(5, 3, 3))
    assert np.allclose(predict_secondary(params, primary, SMALL).numpy(), 0.0)
    assert regression_loss(params, primary, np.zeros((5, 2, 3)), SMALL).item() == 0.0


def test_regression_loss_gradient():
    rng = np.random.default_rng(2)
    params = init_predictor_params(SMALL, seed=2)
    primary = rng.normal(size=(3, 3, 3))
    target = rng.normal(size=(3, 2, 3))

    def loss(p):
        return regression_loss(p, primary, target, SMALL)

    error = max_relative_error(analytic_gradients(loss, params), numerical_gradients(loss, params))
    assert error < 1e-4, f"relative gradient error {error:.2e}"


def test_relu_activation_gradient():
    config = PredictorConfig(hidden=(4,), activation='relu', num_primary=3, num_secondary=1, seed=3)
    params = init_predictor_params(config)
    primary = np.random.default_rng(3).normal(size=(2, 3, 3))

    def loss(p):
        return regression_loss(p, primary, np.ones((2, 1, 3)), config)

    error = max_relative_error(analytic_gradients(loss, params), numerical_gradients(loss, params))
    assert error < 1e-4, f"relative gradient error {error:.2e}"


def test_denormalize_matches_similarity_inverse():
    rng = np.random.default_rng(4)
    transform = SimilarityTransform(1.5, Rotation.random(random_state=4).as_matrix(), rng.normal(size=3))
    canonical = rng.normal(size=(2, 3))
    world = denormalize_prediction(canonical, transform)
    assert np.allclose(transform.apply(world), canonical)

    points = rng.normal(size=(3, 3))
    frame = canonical_frame(points, (0, 1, 2))
    on_tape = denormalize_prediction(canonical, frame)
    assert np.allclose(frame.to_canonical(on_tape).numpy(), canonical)


def test_predictor_rejects_bad_inputs():
    params = init_predictor_params(SMALL)
    _expect(ShapeError, predict_secondary, params, np.zeros((4, 3)), SMALL)
    _expect(NonFiniteError, predict_secondary, params, np.full((3, 3), np.nan), SMALL)
    _expect(ShapeError, predict_secondary, {}, np.zeros((3, 3)), SMALL)
    _expect(ConfigError, PredictorConfig, activation='sigmoid')
    _expect(ConfigError, PredictorConfig, hidden=(0,))


def test_predictor_checkpoint_round_trip():
    params = init_predictor_params(SMALL)
    with tempfile.TemporaryDirectory() as tmp:
        loaded, config = load_predictor(save_predictor(Path(tmp) / 'predictor.json', params, SMALL))
    assert config == SMALL
    primary = np.random.default_rng(5).normal(size=(3, 3))
    assert np.allclose(predict_secondary(loaded, primary, config).numpy(),
                       predict_secondary(params, primary, SMALL).numpy())


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
    print(f"\nPREDICTOR TESTS: {passed} passed, {failed} failed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
