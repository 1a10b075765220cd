#!/usr/bin/env python3
"""
Loss tests for SecLand - labeled terms, multiview consistency and the combined objective
"""

import sys
import traceback

import numpy as np

from secland.autodiff import Tensor
from secland.autodiff.gradcheck import analytic_gradients, max_relative_error, numerical_gradients
from secland.core.losses import (
    LossBreakdown, LossWeights, ViewObservation, labeled_loss, labeled_terms, normalized_cross_correlation,
    pair_loss, total_objective, triangulation_pair_loss, unlabeled_loss, within_view_correlation,
)
from secland.core.predictor import PredictorConfig, init_predictor_params
from secland.geometry import Pose2D, project
from secland.synth import PoseModelConfig, build_pose_model, build_rig, default_skeleton, sample_pose
from secland.utils.errors import ConfigError, ShapeError

STRIDE = 8
FEATURE_DIM = 4


def _scene(seed=0):
    skeleton = default_skeleton()
    pose = sample_pose(skeleton, build_pose_model(skeleton, PoseModelConfig()), seed)
    return skeleton, pose, build_rig(4)


def _view(camera, points, num_primary, features=None, seed=0):
    if features is None:
        features = np.random.default_rng(seed).normal(size=(FEATURE_DIM, 8, 8))
    return ViewObservation(Tensor(project(camera, points)), Tensor(features), camera, STRIDE, num_primary)


def _expect(error, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except error:
        return
    raise AssertionError(f"{fn.__name__} should raise {error.__name__}")


def test_labeled_terms_split_primary_and_secondary():
    truth = Pose2D(np.zeros((3, 2)), np.zeros((2, 2)), secondary_visible=[True, False])
    detections = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0], [3.0, 4.0], [10.0, 10.0]])
    secondary, primary = labeled_terms(detections, truth)
    assert primary.item() == 5.0
    assert secondary.item() == 25.0
    assert labeled_loss(detections, truth).item() == 30.0
    assert labeled_loss(truth, truth).item() == 0.0
    _expect(ShapeError, labeled_terms, np.zeros((4, 2)), truth)


def test_normalized_cross_correlation_bounds():
    a = np.array([1.0, 2.0, 3.0])
    assert abs(normalized_cross_correlation(a, 2.0 * a).item() - 1.0) < 1e-12
    assert abs(normalized_cross_correlation(a, -a).item() + 1.0) < 1e-12
    assert abs(normalized_cross_correlation([1.0, 0.0], [0.0, 1.0]).item()) < 1e-12
    zero = normalized_cross_correlation(np.zeros(3), a).item()
    assert np.isfinite(zero) and zero == 0.0


def test_within_view_correlation_skips_diagonal():
    same = np.ones((3, 4))
    assert abs(within_view_correlation(Tensor(same)).item() - 6.0) < 1e-12
    orthogonal = np.eye(3)
    assert abs(within_view_correlation(Tensor(orthogonal)).item()) < 1e-12


def test_true_secondaries_have_zero_reprojection():
    skeleton, pose, rig = _scene()
    points = pose.stacked()
    view_i = _view(rig[0], points, skeleton.num_primary, seed=1)
    view_j = _view(rig[1], points, skeleton.num_primary, seed=2)
    breakdown = unlabeled_loss(view_i, view_j, pose.secondary)
    assert breakdown.reprojection_i.item() < 1e-16
    assert breakdown.reprojection_j.item() < 1e-16
    assert breakdown.pairs == 1 and breakdown.skipped_pairs == 0
    assert -skeleton.num_secondary - 1e-9 <= breakdown.self_correlation.item() <= skeleton.num_secondary + 1e-9


def test_unlabeled_loss_is_symmetric_in_views():
    skeleton, pose, rig = _scene(1)
    points = pose.stacked()
    predicted = pose.secondary + 0.05
    view_i = _view(rig[0], points, skeleton.num_primary, seed=3)
    view_j = _view(rig[2], points, skeleton.num_primary, seed=4)
    forward = unlabeled_loss(view_i, view_j, predicted).as_row()
    backward = unlabeled_loss(view_j, view_i, predicted).as_row()
    assert abs(forward['reprojection_i'] - backward['reprojection_j']) < 1e-9
    assert abs(forward['reprojection_j'] - backward['reprojection_i']) < 1e-9
    for term in ('self_correlation', 'cross_correlation', 'total'):
        assert abs(forward[term] - backward[term]) < 1e-9, term


def test_unlabeled_loss_gradient():
    skeleton, pose, rig = _scene(2)
    rng = np.random.default_rng(5)
    points = pose.stacked()
    params = {
        'z_i': project(rig[0], points) + rng.normal(scale=0.5, size=(19, 2)),
        'z_j': project(rig[1], points) + rng.normal(scale=0.5, size=(19, 2)),
        'f_i': rng.normal(size=(FEATURE_DIM, 8, 8)),
        'f_j': rng.normal(size=(FEATURE_DIM, 8, 8)),
    }
    predicted = pose.secondary + 0.02

    def loss(p):
        view_i = ViewObservation(p['z_i'], p['f_i'], rig[0], STRIDE, skeleton.num_primary)
        view_j = ViewObservation(p['z_j'], p['f_j'], rig[1], STRIDE, skeleton.num_primary)
        return unlabeled_loss(view_i, view_j, predicted).total

    error = max_relative_error(analytic_gradients(loss, params), numerical_gradients(loss, params))
    assert error < 1e-4, f"relative gradient error {error:.2e}"


def test_pair_loss_through_predictor():
    skeleton, pose, rig = _scene(3)
    points = pose.stacked()
    config = PredictorConfig(hidden=(8,), num_primary=skeleton.num_primary, num_secondary=skeleton.num_secondary)
    params = init_predictor_params(config)
    view_i = _view(rig[0], points, skeleton.num_primary, seed=6)
    view_j = _view(rig[1], points, skeleton.num_primary, seed=7)
    breakdown = pair_loss(view_i, view_j, params, config, skeleton.frame_triple)
    assert breakdown.skipped_pairs == 0
    assert np.isfinite(breakdown.total.item())
    assert breakdown.reprojection_i.item() > 0

    geometric = pair_loss(view_i, view_j, params, config, skeleton.frame_triple, contrastive=False)
    assert geometric.self_correlation.item() == 0.0 and geometric.cross_correlation.item() == 0.0


def test_degenerate_pair_is_skipped():
    skeleton, pose, rig = _scene(4)
    points = pose.stacked()
    config = PredictorConfig(hidden=(8,), num_primary=skeleton.num_primary, num_secondary=skeleton.num_secondary)
    params = init_predictor_params(config)
    view = _view(rig[0], points, skeleton.num_primary)
    breakdown = pair_loss(view, view, params, config, skeleton.frame_triple)
    assert breakdown.pairs == 1 and breakdown.skipped_pairs == 1
    assert breakdown.total.item() == 0.0
    assert triangulation_pair_loss(view, view).skipped_pairs == 1


def test_triangulation_loss_vanishes_on_consistent_detections():
    skeleton, pose, rig = _scene(5)
    points = pose.stacked()
    breakdown = triangulation_pair_loss(_view(rig[0], points, skeleton.num_primary),
                                        _view(rig[1], points, skeleton.num_primary))
    assert breakdown.triangulation.item() < 1e-10
    assert breakdown.skipped_pairs == 0


def test_total_objective_weights_labeled_terms():
    truth = Pose2D(np.zeros((2, 2)), np.zeros((1, 2)))
    detections = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    pair = LossBreakdown(reprojection_i=Tensor(1.0), reprojection_j=Tensor(2.0), self_correlation=Tensor(0.5),
                         cross_correlation=Tensor(0.25), pairs=1)
    combined = total_objective([(detections, truth)], [pair, pair], lambda_labeled=3.0)
    assert combined.pairs == 2
    assert combined.labeled_primary.item() == 1.0 and combined.labeled_secondary.item() == 4.0
    unlabeled = 2 * (1.0 + 2.0 - 0.5 + 0.25)
    assert abs(combined.total.item() - (unlabeled + 3.0 * 5.0)) < 1e-12
    assert abs(total_objective([(detections, truth)], [pair], lambda_labeled=0.0).total.item() - 2.75) < 1e-12
    _expect(ConfigError, total_objective, [], [], -1.0)
    _expect(ConfigError, LossWeights, lambda_labeled=-0.5)


def test_breakdown_row_carries_every_term():
    row = LossBreakdown(triangulation=Tensor(2.0), weights=LossWeights(triangulation=0.5)).as_row()
    for term in LossBreakdown.TERMS:
        assert term in row
    assert row['total'] == 1.0 and row['lambda_labeled'] == 10.0


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
    print(f"\nLOSSES TESTS: {passed} passed, {failed} failed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
