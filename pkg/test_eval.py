#!/usr/bin/env python3
"""
Evaluation tests for SecLand - PCKh, detector scoring, feature correlations and report tables
"""

import sys
import tempfile
import traceback
from pathlib import Path

import numpy as np

from secland.core.detector import DetectorConfig
from secland.core.model import TrainedModel
from secland.core.predictor import PredictorConfig
from secland.eval import (
    CURVE_THRESHOLDS, RESULT_FIELDS, TABLE_FILES, correlation_stats, correlations_from_features,
    default_thresholds, detect_frames, evaluate_model, pckh, report_tables,
)
from secland.geometry import Pose2D
from secland.synth import GenerateConfig, build_rig, default_skeleton, generate_frames
from secland.utils.errors import ConfigError, DataError, ShapeError
from secland.utils.output import read_csv, write_csv

TINY_DETECTOR = DetectorConfig(widths=(4,), strides=(4,), feature_dim=4)


def _random_case(rng, frames, primary=2, secondary=2):
    count = primary + secondary
    truths, predictions = [], []
    for _ in range(frames):
        truth = rng.uniform(0, 20, size=(count, 2))
        visible = rng.uniform(size=count) > 0.2
        truths.append(Pose2D.from_stacked(truth, primary, visible))
        predictions.append(Pose2D.from_stacked(truth + rng.normal(scale=3.0, size=(count, 2)), primary))
    return predictions, truths


def _oracle(predictions, truths, thresholds, pair=(0, 1)):
    count = truths[0].stacked().shape[0]
    correct = np.zeros((len(thresholds), count), dtype=int)
    total = np.zeros(count, dtype=int)
    for pred, truth in zip(predictions, truths):
        points, visible = truth.stacked(), truth.visibility()
        if not (visible[pair[0]] and visible[pair[1]]):
            continue
        length = np.hypot(*(points[pair[0]] - points[pair[1]]))
        if length < 1e-12:
            continue
        for k in range(count):
            if not visible[k]:
                continue
            total[k] += 1
            distance = np.hypot(*(pred.stacked()[k] - points[k]))
            for i, t in enumerate(thresholds):
                if distance <= t * length:
                    correct[i, k] += 1
    return correct, total


def _tiny_model(head_init=0.0):
    detector = DetectorConfig(**{**TINY_DETECTOR.to_dict(), 'head_init': head_init})
    return TrainedModel.initialize(default_skeleton(), detector, PredictorConfig(hidden=(8,)), seed=2)


def _frames(count=3, seed=4):
    return generate_frames(count, config=GenerateConfig(seed=seed), cameras=build_rig(4))


def _result_rows(method, mode, ratio, secondary_value, primaries='truth', source='ablation'):
    rows = []
    for t in (0.25, 0.5, 0.75):
        for landmark in ('right_elbow', 'left_elbow'):
            rows.append({'source': source, 'method': method, 'mode': mode, 'label_ratio': ratio,
                         'primaries': primaries, 'landmark': landmark, 'kind': 'secondary', 'threshold': t,
                         'pckh': secondary_value})
        rows.append({'source': source, 'method': method, 'mode': mode, 'label_ratio': ratio, 'primaries': primaries,
                     'landmark': 'mean_secondary', 'kind': 'mean', 'threshold': t, 'pckh': secondary_value})
        rows.append({'source': source, 'method': method, 'mode': mode, 'label_ratio': ratio, 'primaries': primaries,
                     'landmark': 'mean_primary', 'kind': 'mean', 'threshold': t, 'pckh': 1.0})
    return rows


def _expect(error, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except error:
        return
    raise AssertionError(f"{fn.__name__} should raise {error.__name__}")


def test_pckh_matches_brute_force():
    rng = np.random.default_rng(0)
    thresholds = (0.1, 0.25, 0.5, 0.75, 1.0)
    for _ in range(100):
        predictions, truths = _random_case(rng, int(rng.integers(1, 6)))
        result = pckh(predictions, truths, thresholds, reference_pair=(0, 1))
        correct, total = _oracle(predictions, truths, thresholds)
        assert np.array_equal(result.correct, correct)
        assert np.array_equal(result.total, total)
        assert result.frames + result.skipped_frames == len(truths)


def test_pckh_is_monotone_in_threshold():
    rng = np.random.default_rng(1)
    predictions, truths = _random_case(rng, 40, primary=3, secondary=3)
    grid = default_thresholds()
    assert len(grid) == len(CURVE_THRESHOLDS) == 20
    result = pckh(predictions, truths, grid, reference_pair=(0, 1))
    assert np.all(np.diff(result.correct, axis=0) >= 0)
    means = [result.secondary_mean(t) for t in grid]
    assert all(b >= a for a, b in zip(means, means[1:]))


def test_pckh_boundary_and_skips():
    truth = Pose2D(np.array([[0.0, 0.0], [10.0, 0.0]]), np.array([[5.0, 5.0]]))
    on_boundary = Pose2D(np.array([[0.0, 0.0], [10.0, 0.0]]), np.array([[5.0, 10.0]]))
    result = pckh([on_boundary], [truth], (0.5,), reference_pair=(0, 1))
    assert result.rate(0.5, 2) == 1.0
    hidden = Pose2D(truth.primary, truth.secondary, [True, False])
    collapsed = Pose2D(np.zeros((2, 2)), truth.secondary)
    skipped = pckh([truth, truth], [hidden, collapsed], (0.5,), reference_pair=(0, 1))
    assert skipped.frames == 0 and skipped.skipped_frames == 2
    assert np.isnan(skipped.mean_rate(0.5))
    _expect(ConfigError, pckh, [truth], [truth], (-0.1,))
    _expect(ShapeError, pckh, [truth], [], (0.5,))
    _expect(ConfigError, result.rate, 0.3)


def test_pckh_rows_follow_result_schema():
    predictions, truths = _random_case(np.random.default_rng(2), 5)
    result = pckh(predictions, truths, (0.25, 0.5), reference_pair=(0, 1), landmark_names=['a', 'b', 'c', 'd'])
    rows = result.rows(source='evaluate', method='secland')
    assert len(rows) == 2 * (4 + 2)
    assert all(set(row) <= set(RESULT_FIELDS) for row in rows)
    assert {row['landmark'] for row in rows} == {'a', 'b', 'c', 'd', 'mean_primary', 'mean_secondary'}


def test_model_evaluation_counts_views():
    model = _tiny_model()
    frames = _frames()
    detections = detect_frames(model, frames, batch_size=5)
    assert [len(d) for d in detections] == [4, 4, 4]
    result = evaluate_model(model, frames, (0.5,), batch_size=5)
    assert result.frames + result.skipped_frames == 12
    assert len(result.frame_ids) == 12
    assert result.landmark_names == default_skeleton().names


def test_correlations_from_features():
    features = np.random.default_rng(3).normal(size=(4, 6))
    self_values, cross_values = correlations_from_features(features, features)
    assert np.allclose(self_values, 1.0)
    assert cross_values.shape == (2 * 6,)
    assert np.all(np.abs(cross_values) <= 1.0 + 1e-12)


def test_correlation_stats_skip_degenerate_pairs():
    frames = _frames(2)
    rig = build_rig(4)
    _expect(DataError, correlation_stats, _tiny_model(head_init=0.0), frames, rig)

    model = _tiny_model(head_init=2.0)
    try:
        stats = correlation_stats(model, frames, rig)
    except DataError:
        return
    num_secondary = model.detector.num_secondary
    summary = stats.summary()
    assert summary['self_count'] == num_secondary * (len(frames) - stats.skipped_pairs)
    assert summary['cross_count'] == num_secondary * (num_secondary - 1) * (len(frames) - stats.skipped_pairs)
    assert len(stats.records) == summary['self_count'] + summary['cross_count']
    assert abs(stats.gap - (stats.self_mean - stats.cross_mean)) < 1e-12


def test_report_tables_merge_runs_and_flag_gaps():
    rows = (_result_rows('secland', 'full', 0.1, 0.6) + _result_rows('secland', 'supervised', 0.1, 0.4)
            + _result_rows('secland', 'full', 0.05, 0.5)
            + _result_rows('als', '3d', 0.1, 0.3, source='baselines'))
    rows.append({'source': 'ablation', 'method': 'secland', 'mode': 'geometric', 'label_ratio': 0.1,
                 'primaries': 'detected', 'error': 'diverged'})
    with tempfile.TemporaryDirectory() as tmp:
        write_csv(Path(tmp) / 'runs' / 'results.csv', rows, RESULT_FIELDS)
        bundle = report_tables([Path(tmp) / 'runs'], Path(tmp) / 'report')
        for name in TABLE_FILES.values():
            assert (Path(tmp) / 'report' / name).exists(), name
        ratios = read_csv(Path(tmp) / 'report' / TABLE_FILES['label_ratios'])
    assert len(bundle.sources) == 1
    assert len(bundle.tables['modes']) == 3 * 3
    methods = {(r['method'], r['mode'], r['label_ratio']) for r in bundle.tables['methods']}
    assert ('als', '3d', '0.1') in methods and ('secland', 'full', '0.1') in methods
    assert [r['label_ratio'] for r in ratios] == ['0.05', '0.1']
    assert ratios[0]['missing'] and not ratios[1]['missing']
    assert bundle.gaps and all(gap.startswith('ratio 0.05') for gap in bundle.gaps)
    assert len(bundle.tables['failures']) == 1
    assert bundle.tables['failures'][0]['error'] == 'diverged'


def test_report_handles_empty_and_missing_inputs():
    with tempfile.TemporaryDirectory() as tmp:
        bundle = report_tables([tmp], Path(tmp) / 'out')
        assert bundle.empty
        assert (Path(tmp) / 'out' / TABLE_FILES['modes']).exists()
        _expect(DataError, report_tables, [Path(tmp) / 'nowhere'])


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
    print(f"\nEVAL TESTS: {passed} passed, {failed} failed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
