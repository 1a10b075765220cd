#!/usr/bin/env python3
"""
Baseline tests for SecLand - matrix completion, weighted-lambda regularization, VAE terms and the harness
"""

import sys
import traceback

import numpy as np

from secland.baselines import AlsConfig, AlsMethod, BalsMethod, VaeConfig, VaeMethod, get_method, list_methods
from secland.baselines.completion import CompletionMatrix, als_complete, nearest_neighbor_query
from secland.baselines.evaluate import evaluate_method, run_baselines, training_vectors
from secland.baselines.vae import gaussian_kl, reconstruction_error, vae_impute
from secland.synth import GenerateConfig, build_rig, default_skeleton, generate_frames, make_splits
from secland.utils.errors import ConfigError, DataError, NonFiniteError, ShapeError


def _low_rank(rows=60, columns=30, rank=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(rows, rank)) @ rng.normal(size=(rank, columns))


def _cyclic_mask(size, observed):
    mask = np.zeros((size, size), dtype=bool)
    for i in range(size):
        mask[i, (i + np.arange(observed)) % size] = True
    return mask


def _split():
    config = GenerateConfig(frames=16, test_frames=3, seed=9)
    rig = build_rig(4)
    frames = generate_frames(16, config=config, cameras=rig)
    test = generate_frames(3, config=config, start_id=16, cameras=rig)
    return make_splits(frames, 0.75, 9, cameras=rig, primary_ratio=0.75, test=test)


def _expect(error, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except error:
        return
    raise AssertionError(f"{fn.__name__} should raise {error.__name__}")


def test_als_recovers_low_rank_matrix():
    truth = _low_rank()
    mask = np.random.default_rng(1).uniform(size=truth.shape) > 0.3
    result = als_complete(CompletionMatrix(np.where(mask, truth, np.nan), mask), 3, iterations=500, reg=1e-12)
    error = np.linalg.norm(result.completed - truth) / np.linalg.norm(truth)
    assert error < 1e-6, f"relative completion error {error:.2e}"
    assert np.array_equal(result.completed[mask], truth[mask])


def test_als_objective_never_increases():
    truth = _low_rank(seed=2) + 0.1 * np.random.default_rng(3).normal(size=(60, 30))
    mask = np.random.default_rng(4).uniform(size=truth.shape) > 0.3
    result = als_complete(CompletionMatrix(truth, mask), 5, iterations=50, reg=1e-2)
    steps = np.diff(result.objectives)
    assert np.all(steps <= 1e-10 * max(result.objectives[0], 1.0)), steps.max()
    assert result.iterations == 50 and not result.diverged


def test_weighted_lambda_matches_scaled_lambda_under_uniform_counts():
    values = _low_rank(rows=24, columns=24, rank=4, seed=5)
    matrix = CompletionMatrix(values, _cyclic_mask(24, 10))
    assert set(matrix.row_counts) == {10} and set(matrix.column_counts) == {10}
    weighted = als_complete(matrix, 4, iterations=30, reg=0.05, weighted=True, seed=7)
    plain = als_complete(matrix, 4, iterations=30, reg=0.05 * 10, seed=7)
    assert np.max(np.abs(weighted.completed - plain.completed)) < 1e-9


def test_fully_observed_matrix_matches_ridge_shrinkage():
    rng = np.random.default_rng(10)
    left, _ = np.linalg.qr(rng.normal(size=(6, 4)))
    right, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    singular = np.array([5.0, 4.0, 3.0, 2.0])
    values = left @ np.diag(singular) @ right.T
    reg = 0.5
    result = als_complete(CompletionMatrix(values, np.ones(values.shape, dtype=bool)), 4, iterations=3000, reg=reg)
    assert np.array_equal(result.completed, values)
    # ridge-regularized factors soft-threshold the singular values by reg
    oracle = left @ np.diag(np.maximum(singular - reg, 0.0)) @ right.T
    assert np.max(np.abs(result.reconstruction - oracle)) < 1e-5
    assert np.linalg.norm(result.reconstruction - values, 2) <= reg + 1e-6


def test_query_matching_a_labeled_row_recovers_its_secondaries():
    data = _low_rank(rows=40, columns=12, rank=3, seed=11)
    primary = np.arange(8)
    for cls in (AlsMethod, BalsMethod):
        method = cls(AlsConfig(rank=3, reg=1e-10, iterations=400, neighbors=20)).fit(data, primary)
        imputed = method.impute(data[5, primary])
        assert np.max(np.abs(imputed[0] - data[5, 8:])) < 1e-3, cls.__name__


def test_single_labeled_row_returns_its_secondaries():
    row = np.random.default_rng(12).normal(size=(1, 12))
    primary = np.arange(8)
    for cls in (AlsMethod, BalsMethod):
        method = cls().fit(row, primary)
        imputed = method.impute(row[:, primary])
        assert np.max(np.abs(imputed[0] - row[0, 8:])) < 1e-12, cls.__name__
        doubled = method.impute(2.0 * row[:, primary])
        assert np.allclose(doubled[0], 2.0 * row[0, 8:])


def test_completion_rejects_bad_inputs():
    matrix = CompletionMatrix(np.ones((4, 3)), np.ones((4, 3), dtype=bool))
    _expect(ConfigError, als_complete, matrix, 0)
    _expect(ConfigError, als_complete, matrix, 4)
    _expect(ConfigError, als_complete, matrix, 2, 10, -1.0)
    hollow = np.ones((4, 3), dtype=bool)
    hollow[:, 1] = False
    _expect(DataError, als_complete, CompletionMatrix(np.ones((4, 3)), hollow), 1)
    _expect(ShapeError, CompletionMatrix, np.ones((4, 3)), np.ones((3, 4), dtype=bool))
    _expect(ConfigError, AlsConfig, rank=0)


def test_nearest_neighbor_query_layout():
    labeled = np.array([[0.0, 0.0, 9.0], [5.0, 5.0, 8.0], [1.0, 1.0, 7.0]])
    placed = nearest_neighbor_query(labeled, [0.9, 0.9], [0, 1], neighbors=2)
    assert placed.neighbors.tolist() == [2, 0]
    assert placed.matrix.shape == (3, 3)
    assert placed.matrix.mask[-1].tolist() == [True, True, False]
    assert placed.matrix.values[-1, 2] == 0.0
    assert np.all(np.diff(placed.distances) >= 0)
    _expect(ShapeError, nearest_neighbor_query, labeled, [1.0], [0, 1])


def test_als_method_imputes_low_rank_poses():
    data = _low_rank(rows=80, columns=12, rank=3, seed=6)
    primary = np.arange(8)
    for cls in (AlsMethod, BalsMethod):
        method = cls(AlsConfig(rank=3, reg=1e-10, iterations=400, neighbors=40)).fit(data[:70], primary)
        imputed = method.impute(data[70:, primary])
        assert imputed.shape == (10, 4)
        error = np.linalg.norm(imputed - data[70:, 8:]) / np.linalg.norm(data[70:, 8:])
        assert error < 1e-3, f"{cls.__name__} relative error {error:.2e}"


def test_method_interface_guards():
    method = AlsMethod()
    _expect(DataError, method.impute, np.zeros((1, 3)))
    assert method.safe_impute(np.zeros((1, 3))) is None
    method.fit(_low_rank(rows=10, columns=6), [0, 1, 2])
    _expect(ShapeError, method.impute, np.zeros((1, 4)))
    _expect(DataError, AlsMethod().fit, np.zeros((0, 6)), [0])
    _expect(DataError, AlsMethod().fit, np.full((3, 6), np.nan), [0])


def test_gaussian_kl_closed_forms():
    assert gaussian_kl(np.zeros((4, 3)), np.zeros((4, 3))).item() == 0.0
    value = gaussian_kl(np.array([1.0, 2.0]), np.array([0.0, np.log(2.0)])).item()
    assert abs(value - (3.0 - 0.5 * np.log(2.0))) < 1e-12
    assert reconstruction_error(np.array([[1.0, 2.0]]), np.array([[0.0, 4.0]])).item() == 5.0


def test_vae_imputes_with_finite_outputs():
    data = _low_rank(rows=50, columns=10, rank=2, seed=8)
    untrained = VaeMethod(VaeConfig(steps=0)).fit(data, np.arange(6))
    out = untrained.impute(data[:3, :6])
    assert out.shape == (3, 4) and np.all(np.isfinite(out))

    trained = VaeMethod(VaeConfig(steps=20, batch_size=16, hidden=16, latent=4)).fit(data, np.arange(6))
    assert len(trained.history) == 20
    assert np.all(np.isfinite(trained.impute(data[:3, :6])))
    _expect(ConfigError, VaeConfig, latent=0)


def test_vae_impute_on_constant_poses_returns_the_mean_pose():
    pose = np.linspace(-1.0, 2.0, 10)
    training = np.tile(pose, (12, 1))
    imputed = vae_impute(training, np.arange(6), pose[:6], VaeConfig(steps=2, batch_size=4, hidden=8, latent=2))
    assert imputed.shape == (1, 4)
    assert np.allclose(imputed[0], pose[6:], atol=1e-6)


def test_method_registry():
    assert list_methods() == ['als', 'bals', 'vae']
    assert get_method('ALS') is AlsMethod and get_method('bals') is BalsMethod
    assert get_method('pca') is None


def test_run_baselines_produces_result_rows():
    split = _split()
    skeleton = default_skeleton()
    assert training_vectors(split, skeleton, '3d').vectors.shape[1] == 3 * skeleton.num_landmarks
    assert training_vectors(split, skeleton, '2d').vectors.shape[1] == 2 * skeleton.num_landmarks
    configs = {'als': AlsConfig(iterations=10, neighbors=8), 'vae': VaeConfig(steps=3, hidden=8, latent=2)}
    rows = run_baselines(split, skeleton, ['als', 'vae'], ['2d', '3d'], configs, thresholds=(0.5,))
    assert not [r for r in rows if r.get('error')]
    assert {(r['method'], r['mode']) for r in rows} == {('als', '2d'), ('als', '3d'), ('vae', '2d'), ('vae', '3d')}
    assert all(r['source'] == 'baselines' and r['primaries'] == 'truth' for r in rows)
    primaries = [r for r in rows if r['kind'] == 'primary' and r['method'] == 'als' and r['mode'] == '3d']
    assert all(r['pckh'] == 1.0 for r in primaries if r['pckh'] is not None)
    _expect(ConfigError, run_baselines, split, skeleton, ['pca'])
    _expect(ConfigError, run_baselines, split, skeleton, ['als'], ['4d'])


class _DivergingMethod(AlsMethod):
    def _impute(self, primary):
        raise NonFiniteError("completion produced NaN")


def test_failing_queries_are_scored_as_misses():
    split = _split()
    skeleton = default_skeleton()
    for mode in ('2d', '3d'):
        data = training_vectors(split, skeleton, mode)
        method = _DivergingMethod().fit(data.vectors, data.primary_columns)
        result = evaluate_method(method, mode, split, skeleton, thresholds=(0.5,))
        assert method.failed_queries > 0, mode
        assert result.secondary_mean(0.5) == 0.0, mode
        assert result.primary_mean(0.5) == 1.0, mode


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
    print(f"\nBASELINES TESTS: {passed} passed, {failed} failed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
