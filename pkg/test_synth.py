#!/usr/bin/env python3
"""
Synthetic data tests for SecLand - skeleton, renderer, splits and dataset files
"""

import json
import logging
import sys
import tempfile
import traceback
import warnings
from pathlib import Path

import numpy as np

from secland.geometry import project
from secland.synth import (
    LABELED_PRIMARY, LABELED_SECONDARY, TEST, UNLABELED, GenerateConfig, PoseModelConfig, RenderConfig, apply_split,
    assign_splits, build_pose_model, build_rig, default_skeleton, forward_kinematics, frame_pose_3d, generate_dataset,
    generate_frames, load_dataset, make_splits, render, restrict_labels, sample_pose,
)
from secland.synth.dataset import HEADER_FILE, INDEX_FILE
from secland.utils.errors import ConfigError, DataError, SchemaVersionError
from secland.utils.helpers import format_duration, tree_digest
from secland.utils.logger import LIBRARY_LOGGERS, setup_logger


def _small_config(**overrides):
    values = dict(frames=12, test_frames=4, label_ratio=0.25, primary_ratio=0.5, seed=3)
    values.update(overrides)
    return GenerateConfig(**values)


def _expect(error, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except error:
        return
    raise AssertionError(f"{fn.__name__} should raise {error.__name__}")


def test_default_skeleton_layout():
    skeleton = default_skeleton()
    assert skeleton.num_primary == 13 and skeleton.num_secondary == 6
    assert skeleton.names[:13] == skeleton.primary_names
    assert 'right_elbow' in skeleton.secondary_names
    assert all(i < skeleton.num_primary for i in skeleton.frame_triple)
    assert all(i < skeleton.num_primary for i in skeleton.reference_pair)


def test_forward_kinematics_preserves_bone_lengths():
    skeleton = default_skeleton()
    rng = np.random.default_rng(0)
    for _ in range(10):
        angles = rng.uniform(-1.0, 1.0, size=2 * skeleton.num_landmarks)
        positions = forward_kinematics(skeleton, angles, yaw=rng.uniform(0, 6), translation=[0.1, -0.2, 0.0])
        for parent, child in skeleton.bones:
            length = np.linalg.norm(positions[child] - positions[parent])
            assert abs(length - skeleton.bone_lengths[child]) < 1e-12


def test_pose_samples_are_seeded():
    skeleton = default_skeleton()
    model = build_pose_model(skeleton, PoseModelConfig())
    first = sample_pose(skeleton, model, 11)
    assert np.array_equal(first.stacked(), sample_pose(skeleton, model, 11).stacked())
    assert not np.array_equal(first.stacked(), sample_pose(skeleton, model, 12).stacked())
    _expect(ConfigError, build_pose_model, skeleton, PoseModelConfig(rank=1000))


def test_render_truth_matches_projection():
    skeleton = default_skeleton()
    pose = sample_pose(skeleton, build_pose_model(skeleton, PoseModelConfig()), 5)
    camera = build_rig(4)[0]
    image, truth = render(pose, camera, RenderConfig.noiseless(), seed=0, bones=skeleton.bones)
    assert image.shape == (3, camera.height, camera.width)
    assert image.min() >= 0.0 and image.max() <= 1.0
    visible = truth.visibility()
    assert visible.sum() > skeleton.num_landmarks // 2
    expected = project(camera, pose.stacked())
    assert np.allclose(truth.stacked()[visible], expected[visible], atol=1e-9)


def test_generated_frames_are_deterministic():
    config = _small_config()
    first = generate_frames(2, config=config)
    second = generate_frames(2, config=config)
    for a, b in zip(first, second):
        assert a.frame_id == b.frame_id
        for view in range(a.num_views):
            assert np.array_equal(a.image(view), b.image(view))
            assert np.array_equal(a.poses_2d[view].stacked(), b.poses_2d[view].stacked())


def test_assign_splits_counts():
    labels = assign_splits(range(100), 0.1, seed=4, primary_ratio=0.3)
    values = list(labels.values())
    assert values.count(LABELED_SECONDARY) == 10
    assert values.count(LABELED_PRIMARY) == 20
    assert values.count(UNLABELED) == 70
    assert labels == assign_splits(range(100), 0.1, seed=4, primary_ratio=0.3)
    _expect(ConfigError, assign_splits, range(100), 0.0, 4)
    _expect(ConfigError, assign_splits, range(5), 0.05, 4)


def test_apply_split_strips_truth():
    frame = generate_frames(1, config=_small_config())[0]
    primary_only = apply_split(frame, LABELED_PRIMARY)
    assert primary_only.pose_3d is None
    for pose in primary_only.poses_2d:
        assert not pose.secondary_visible.any()
        assert np.allclose(pose.secondary, 0.0)
    unlabeled = apply_split(frame, UNLABELED)
    assert all(p is None for p in unlabeled.poses_2d)
    assert not unlabeled.has_primary_labels
    _expect(ConfigError, apply_split, frame, 'bogus')


def test_make_splits_and_restrict_labels():
    config = _small_config(frames=20)
    frames = generate_frames(20, config=config)
    split = make_splits(frames, 0.5, seed=1, cameras=build_rig(4), primary_ratio=0.6)
    assert split.counts == {'labeled_primary': 12, 'labeled_secondary': 10, 'unlabeled': 8, 'test': 0}
    ids = {f.frame_id for f in split.labeled_secondary}
    assert ids <= {f.frame_id for f in split.labeled_primary}

    restricted = restrict_labels(split, 0.1, seed=1)
    assert len(restricted.labeled_secondary) == 2
    assert len(restricted.labeled_primary) == 12
    assert {f.frame_id for f in restricted.labeled_secondary} <= ids
    demoted = [f for f in restricted.labeled_primary if f.frame_id not in
               {g.frame_id for g in restricted.labeled_secondary}]
    assert all(f.split == LABELED_PRIMARY for f in demoted)
    _expect(ConfigError, restrict_labels, split, 0.9, 1)


def test_frame_pose_3d_triangulates_without_stored_truth():
    frame = generate_frames(1, config=_small_config())[0]
    cameras = build_rig(4)
    stripped = apply_split(frame, TEST)
    stripped.pose_3d = None
    pose = frame_pose_3d(stripped, cameras)
    visible = frame.poses_2d[0].visibility() & frame.poses_2d[1].visibility()
    assert np.allclose(pose.stacked()[visible], frame.pose_3d.stacked()[visible], atol=1e-6)


def test_dataset_files_round_trip():
    with tempfile.TemporaryDirectory() as tmp:
        root = generate_dataset(Path(tmp) / 'data', _small_config(), threads=2)
        dataset = load_dataset(root)
        split = dataset.to_split()
        assert split.counts == {'labeled_primary': 6, 'labeled_secondary': 3, 'unlabeled': 6, 'test': 4}
        assert len(dataset.cameras) == 4
        frame = split.labeled_secondary[0]
        assert frame.image(0).shape == (3, 64, 64)
        assert frame.pose_3d is not None
        assert all(f.poses_2d[0] is None for f in split.unlabeled)
        header = json.loads((root / HEADER_FILE).read_text())
        assert header['splits'][TEST] == 4


def test_generation_is_reproducible_across_threads():
    with tempfile.TemporaryDirectory() as tmp:
        first = generate_dataset(Path(tmp) / 'a', _small_config(), threads=1)
        second = generate_dataset(Path(tmp) / 'b', _small_config(), threads=4)
        third = generate_dataset(Path(tmp) / 'c', _small_config(seed=4), threads=1)
        assert tree_digest(first) == tree_digest(second)
        assert tree_digest(first) != tree_digest(third)


def test_run_durations_are_human_readable():
    assert format_duration(4.21) == "4.2s"
    assert format_duration(123) == "2m03s"
    assert format_duration(3723) == "1h02m03s"


def test_logger_collects_library_warnings():
    with tempfile.TemporaryDirectory() as tmp:
        log_file = Path(tmp) / 'secland_test.log'
        logger = setup_logger(log_file=str(log_file), command='test')
        try:
            logging.getLogger('asyncio').debug("loop chatter")
            logging.getLogger('asyncio').warning("Task exception was never retrieved")
            with warnings.catch_warnings():
                warnings.simplefilter('always')
                warnings.warn("overflow encountered in matmul", RuntimeWarning)
            logger.debug("run detail")
        finally:
            for name in ('secland', *LIBRARY_LOGGERS):
                for handler in logging.getLogger(name).handlers[:]:
                    logging.getLogger(name).removeHandler(handler)
                    handler.close()
            logging.captureWarnings(False)
        text = log_file.read_text(encoding='utf-8')
        assert "Task exception was never retrieved" in text
        assert "overflow encountered in matmul" in text
        assert "run detail" in text
        assert "loop chatter" not in text


def test_load_dataset_rejects_bad_directories():
    with tempfile.TemporaryDirectory() as tmp:
        _expect(DataError, load_dataset, Path(tmp) / 'missing')
        root = generate_dataset(Path(tmp) / 'data', _small_config(frames=4, test_frames=0, label_ratio=0.5), threads=1)
        header = json.loads((root / HEADER_FILE).read_text())
        header['schema_version'] = 999
        (root / HEADER_FILE).write_text(json.dumps(header))
        _expect(SchemaVersionError, load_dataset, root)

        header['schema_version'] = 1
        (root / HEADER_FILE).write_text(json.dumps(header))
        lines = (root / INDEX_FILE).read_text().splitlines()
        tampered = []
        for line in lines:
            record = json.loads(line)
            if record['split'] == UNLABELED:
                record['pose2d'] = {'primary': [[0.0, 0.0]] * 13}
            tampered.append(json.dumps(record))
        (root / INDEX_FILE).write_text('\n'.join(tampered) + '\n')
        _expect(DataError, load_dataset, root)


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
    print(f"\nSYNTH TESTS: {passed} passed, {failed} failed")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
