"""
Multiview dataset model and storage for SecLand
Frame generation, deterministic D_Z / D_X / D_X^U splits, JSON-lines index with float32 image files
"""

import asyncio
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import aiofiles
import numpy as np

from .. import SCHEMA_VERSION
from ..geometry import CameraParams, Pose2D, Pose3D, load_rig, save_rig, triangulate_dlt
from ..utils.config import section_from_dict
from ..utils.errors import ConfigError, DataError, EmptyDatasetError, SchemaVersionError
from ..utils.helpers import derive_seed
from ..utils.logger import get_logger
from .render import RenderConfig, perturb_keypoints, render_views
from .rig import RigConfig, rig_from_config
from .skeleton import PoseModel, PoseModelConfig, SkeletonSpec, build_pose_model, default_skeleton, sample_pose

logger = get_logger('synth.dataset')

LABELED_SECONDARY = 'labeled_secondary'
LABELED_PRIMARY = 'labeled_primary'
UNLABELED = 'unlabeled'
TEST = 'test'
SPLITS = (LABELED_SECONDARY, LABELED_PRIMARY, UNLABELED, TEST)

INDEX_FILE = 'frames.jsonl'
HEADER_FILE = 'dataset.json'
RIG_FILE = 'rig.json'
IMAGE_DIR = 'images'
IMAGE_DTYPE = '<f4'


@dataclass
class GenerateConfig:
    frames: int = 1000
    test_frames: int = 200
    label_ratio: float = 0.1
    primary_ratio: float = 0.3
    seed: int = 0
    rig: RigConfig = field(default_factory=RigConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    pose_model: PoseModelConfig = field(default_factory=PoseModelConfig)

    @classmethod
    def from_dict(cls, entry: Optional[Dict[str, Any]]) -> 'GenerateConfig':
        return section_from_dict(cls, entry, 'generate')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class MultiviewFrame:
    """
    One synchronized capture: per-camera images and optional truths.

    Images are held in memory when freshly generated and read lazily from
    `image_paths` when loaded from disk.
    """

    frame_id: int
    num_views: int
    images: List[Optional[np.ndarray]] = field(default_factory=list)
    image_paths: List[Optional[Path]] = field(default_factory=list)
    poses_2d: List[Optional[Pose2D]] = field(default_factory=list)
    detections: List[Optional[Pose2D]] = field(default_factory=list)
    pose_3d: Optional[Pose3D] = None
    split: str = TEST
    image_shape: Optional[tuple] = None

    def __post_init__(self):
        for name in ('images', 'image_paths', 'poses_2d', 'detections'):
            values = getattr(self, name)
            if not values:
                setattr(self, name, [None] * self.num_views)
            elif len(values) != self.num_views:
                raise DataError(f"Frame {self.frame_id}: {name} has {len(values)} entries for {self.num_views} views",
                                frame=self.frame_id)

    @property
    def has_primary_labels(self) -> bool:
        return all(p is not None for p in self.poses_2d)

    @property
    def has_secondary_labels(self) -> bool:
        return self.split in (LABELED_SECONDARY, TEST) and self.has_primary_labels

    def image(self, view: int) -> np.ndarray:
        """(3, H, W) float64 image for one camera"""
        if self.images[view] is not None:
            return self.images[view]
        path = self.image_paths[view]
        if path is None:
            raise DataError(f"Frame {self.frame_id} has no image for view {view}", frame=self.frame_id, view=view)
        return read_image(path, self.image_shape)

    def stacked_images(self, views: Optional[Sequence[int]] = None) -> np.ndarray:
        views = range(self.num_views) if views is None else views
        return np.stack([self.image(v) for v in views])


@dataclass
class DatasetSplit:
    """
    D_Z (labeled primary, includes every D_X frame), D_X (labeled secondary),
    D_X^U (unlabeled multiview) plus the held-out test frames.
    """

    labeled_primary: List[MultiviewFrame]
    labeled_secondary: List[MultiviewFrame]
    unlabeled: List[MultiviewFrame]
    cameras: List[CameraParams] = field(default_factory=list)
    test: List[MultiviewFrame] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        primary_ids = {f.frame_id for f in self.labeled_primary}
        if not {f.frame_id for f in self.labeled_secondary} <= primary_ids:
            raise DataError("Labeled-secondary frames must also be labeled-primary frames")
        if len(self.labeled_primary) < len(self.labeled_secondary):
            raise DataError("D_Z must be at least as large as D_X")
        for frame in self.unlabeled:
            if frame.num_views < 2:
                raise DataError(f"Unlabeled frame {frame.frame_id} has fewer than two views", frame=frame.frame_id)

    @property
    def counts(self) -> Dict[str, int]:
        return {
            'labeled_primary': len(self.labeled_primary),
            'labeled_secondary': len(self.labeled_secondary),
            'unlabeled': len(self.unlabeled),
            'test': len(self.test),
        }


@dataclass
class Dataset:
    root: Optional[Path]
    header: Dict[str, Any]
    skeleton: SkeletonSpec
    cameras: List[CameraParams]
    frames: List[MultiviewFrame]

    def frames_in(self, split: str) -> List[MultiviewFrame]:
        return [f for f in self.frames if f.split == split]

    def to_split(self) -> DatasetSplit:
        secondary = self.frames_in(LABELED_SECONDARY)
        return DatasetSplit(
            labeled_primary=secondary + self.frames_in(LABELED_PRIMARY),
            labeled_secondary=secondary,
            unlabeled=self.frames_in(UNLABELED),
            cameras=self.cameras,
            test=self.frames_in(TEST),
        )

    def annotated_frames(self) -> List[MultiviewFrame]:
        """Frames whose records carry full primary and secondary truth"""
        return [f for f in self.frames if f.split in (LABELED_SECONDARY, TEST)]


# Generation

def generate_frame(frame_id: int, skeleton: SkeletonSpec, model: PoseModel, cameras: List[CameraParams],
                   render_config: RenderConfig, master_seed: int) -> MultiviewFrame:
    """
    Sample, render and annotate one frame; content depends only on (master_seed, frame_id).
    """
    seed = derive_seed(master_seed, 'frame', frame_id)
    pose_seed, render_seed, noise_seed = np.random.SeedSequence(seed).spawn(3)
    pose = sample_pose(skeleton, model, pose_seed)
    images, truths = render_views(pose, cameras, render_config, render_seed, skeleton.bones)
    detections = [None] * len(cameras)
    if render_config.keypoint_noise > 0:
        detections = [perturb_keypoints(t, render_config.keypoint_noise, s)
                      for t, s in zip(truths, noise_seed.spawn(len(cameras)))]
    return MultiviewFrame(frame_id=frame_id, num_views=len(cameras), images=images, poses_2d=truths,
                          detections=detections, pose_3d=pose, split=TEST,
                          image_shape=images[0].shape)


def generate_frames(count: int, skeleton: Optional[SkeletonSpec] = None, config: Optional[GenerateConfig] = None,
                    start_id: int = 0, cameras: Optional[List[CameraParams]] = None) -> List[MultiviewFrame]:
    """In-memory frames with full truth, in frame-id order"""
    config = config or GenerateConfig()
    skeleton = skeleton or default_skeleton()
    cameras = cameras or rig_from_config(config.rig)
    model = build_pose_model(skeleton, config.pose_model)
    return [generate_frame(i, skeleton, model, cameras, config.render, config.seed)
            for i in range(start_id, start_id + count)]


# Splitting

def assign_splits(frame_ids: Sequence[int], label_ratio: float, seed: int,
                  primary_ratio: float = 0.3) -> Dict[int, str]:
    """
    Deterministic split labels for frame ids.

    round(label_ratio * N) frames become D_X; D_Z holds those plus enough
    primary-only frames to reach round(primary_ratio * N); the rest are unlabeled.
    """
    if not 0.0 < label_ratio <= 1.0:
        raise ConfigError(f"Label ratio must be in (0, 1], got {label_ratio}", label_ratio=label_ratio)
    if not 0.0 <= primary_ratio <= 1.0:
        raise ConfigError(f"Primary ratio must be in [0, 1], got {primary_ratio}", primary_ratio=primary_ratio)
    ids = sorted(int(i) for i in frame_ids)
    n = len(ids)
    num_secondary = int(np.floor(label_ratio * n + 0.5))
    if num_secondary == 0:
        raise ConfigError(f"Label ratio {label_ratio} yields no labeled frames out of {n}",
                          label_ratio=label_ratio, frames=n)
    num_primary = max(num_secondary, int(np.floor(primary_ratio * n + 0.5)))
    order = np.random.default_rng(derive_seed(seed, 'split')).permutation(n)
    labels = {}
    for rank, position in enumerate(order):
        if rank < num_secondary:
            labels[ids[position]] = LABELED_SECONDARY
        elif rank < num_primary:
            labels[ids[position]] = LABELED_PRIMARY
        else:
            labels[ids[position]] = UNLABELED
    return labels


def apply_split(frame: MultiviewFrame, split: str) -> MultiviewFrame:
    """Copy of a frame carrying only the truth its split is allowed to see"""
    if split in (LABELED_SECONDARY, TEST):
        return replace(frame, split=split)
    if split == LABELED_PRIMARY:
        poses = [None if p is None else Pose2D(p.primary, np.zeros_like(p.secondary), p.primary_visible,
                                               np.zeros(p.num_secondary, dtype=bool))
                 for p in frame.poses_2d]
        return replace(frame, split=split, poses_2d=poses, detections=[None] * frame.num_views, pose_3d=None)
    if split == UNLABELED:
        empty = [None] * frame.num_views
        return replace(frame, split=split, poses_2d=list(empty), detections=list(empty), pose_3d=None)
    raise ConfigError(f"Unknown split '{split}'", split=split)


def make_splits(frames: Sequence[MultiviewFrame], label_ratio: float, seed: int,
                cameras: Optional[List[CameraParams]] = None, primary_ratio: float = 0.3,
                test: Optional[Sequence[MultiviewFrame]] = None) -> DatasetSplit:
    """
    Partition frames into D_Z, D_X and D_X^U.

    Args:
        frames: Fully annotated frames to partition
        label_ratio: Fraction of frames that keep secondary labels (0 < r <= 1)
        seed: Split seed
        cameras: Rig the frames were captured with
        primary_ratio: Fraction of frames that keep primary labels (at least label_ratio)
        test: Held-out frames passed through untouched

    Returns:
        DatasetSplit with unlabeled frames stripped of all truth
    """
    labels = assign_splits([f.frame_id for f in frames], label_ratio, seed, primary_ratio)
    split_frames = [apply_split(f, labels[f.frame_id]) for f in sorted(frames, key=lambda f: f.frame_id)]
    secondary = [f for f in split_frames if f.split == LABELED_SECONDARY]
    primary_only = [f for f in split_frames if f.split == LABELED_PRIMARY]
    return DatasetSplit(
        labeled_primary=secondary + primary_only,
        labeled_secondary=secondary,
        unlabeled=[f for f in split_frames if f.split == UNLABELED],
        cameras=list(cameras or []),
        test=[apply_split(f, TEST) for f in (test or [])],
    )


def restrict_labels(split: DatasetSplit, label_ratio: float, seed: int) -> DatasetSplit:
    """
    Keep secondary labels on round(label_ratio * N) training frames only.

    N counts every non-test frame. Demoted D_X frames keep their primary labels,
    so D_Z is unchanged; the label ratio can only shrink.
    """
    pool = sorted(split.labeled_secondary, key=lambda f: f.frame_id)
    total = len(split.labeled_primary) + len(split.unlabeled)
    wanted = int(np.floor(label_ratio * total + 0.5))
    if not 0.0 < label_ratio <= 1.0 or wanted == 0:
        raise ConfigError(f"Label ratio {label_ratio} yields no labeled frames out of {total}",
                          label_ratio=label_ratio, frames=total)
    if wanted > len(pool):
        raise ConfigError(f"Label ratio {label_ratio} needs {wanted} frames with secondary labels, "
                          f"the dataset holds {len(pool)}", label_ratio=label_ratio, available=len(pool))
    order = np.random.default_rng(derive_seed(seed, 'restrict', label_ratio)).permutation(len(pool))
    keep = {pool[i].frame_id for i in order[:wanted]}
    secondary = [f for f in pool if f.frame_id in keep]
    demoted = [apply_split(f, LABELED_PRIMARY) for f in pool if f.frame_id not in keep]
    primary_only = [f for f in split.labeled_primary if f.split == LABELED_PRIMARY]
    return DatasetSplit(
        labeled_primary=secondary + sorted(demoted + primary_only, key=lambda f: f.frame_id),
        labeled_secondary=secondary,
        unlabeled=list(split.unlabeled),
        cameras=list(split.cameras),
        test=list(split.test),
    )


def frame_pose_3d(frame: MultiviewFrame, cameras: List[CameraParams], views=(0, 1)) -> Pose3D:
    """World pose of an annotated frame: stored truth, else DLT over two labeled views"""
    if frame.pose_3d is not None:
        return frame.pose_3d
    first, second = (frame.poses_2d[v] for v in views)
    if first is None or second is None:
        raise DataError(f"Frame {frame.frame_id} has no 2D truth in views {views}", frame=frame.frame_id)
    points = triangulate_dlt(first.stacked(), second.stacked(), cameras[views[0]], cameras[views[1]])
    return Pose3D.from_stacked(points, first.num_primary)


# Serialization

def read_image(path, shape) -> np.ndarray:
    try:
        data = np.fromfile(path, dtype=IMAGE_DTYPE)
    except OSError as e:
        raise DataError(f"Cannot read image {path}: {e}", path=str(path))
    if shape is not None:
        if data.size != int(np.prod(shape)):
            raise DataError(f"Image {path} holds {data.size} values, expected shape {tuple(shape)}", path=str(path))
        data = data.reshape(shape)
    return data.astype(np.float64)


def image_name(frame_id: int, view: int) -> str:
    return f"{IMAGE_DIR}/{frame_id:07d}_{view}.f32"


def _pose2d_record(pose: Pose2D, with_secondary: bool) -> Dict[str, Any]:
    record = {
        'primary': pose.primary.tolist(),
        'primary_visible': pose.primary_visible.astype(int).tolist(),
    }
    if with_secondary:
        record['secondary'] = pose.secondary.tolist()
        record['secondary_visible'] = pose.secondary_visible.astype(int).tolist()
    return record


def frame_records(frame: MultiviewFrame) -> List[Dict[str, Any]]:
    """One index record per view; pose fields only where the split carries truth"""
    records = []
    with_secondary = frame.split in (LABELED_SECONDARY, TEST)
    for view in range(frame.num_views):
        record = {'frame': frame.frame_id, 'camera': view, 'split': frame.split, 'image': image_name(frame.frame_id, view)}
        if frame.split != UNLABELED:
            if frame.poses_2d[view] is not None:
                record['pose2d'] = _pose2d_record(frame.poses_2d[view], with_secondary)
            if frame.detections[view] is not None:
                record['detected'] = _pose2d_record(frame.detections[view], with_secondary)
            if view == 0 and frame.pose_3d is not None and with_secondary:
                record['pose3d'] = {'primary': frame.pose_3d.primary.tolist(),
                                    'secondary': frame.pose_3d.secondary.tolist()}
        records.append(record)
    return records


POSE_FIELDS = ('pose2d', 'detected', 'pose3d')


def validate_record(record: Mapping[str, Any]):
    """Schema check for one index line"""
    for key in ('frame', 'camera', 'split', 'image'):
        if key not in record:
            raise DataError(f"Index record is missing '{key}'", record=dict(record))
    if record['split'] not in SPLITS:
        raise DataError(f"Unknown split '{record['split']}'", frame=record['frame'])
    if record['split'] == UNLABELED and any(k in record for k in POSE_FIELDS):
        raise DataError(f"Unlabeled frame {record['frame']} carries truth annotations", frame=record['frame'])
    if record['split'] == LABELED_PRIMARY:
        for key in ('pose2d', 'detected'):
            if 'secondary' in record.get(key, {}):
                raise DataError(f"Primary-only frame {record['frame']} carries secondary labels", frame=record['frame'])


def _pose2d_from_record(entry: Mapping[str, Any], num_secondary: int) -> Pose2D:
    secondary = entry.get('secondary', np.zeros((num_secondary, 2)))
    secondary_visible = entry.get('secondary_visible', np.zeros(num_secondary, dtype=bool))
    return Pose2D(entry['primary'], secondary, entry.get('primary_visible'), secondary_visible)


class DatasetWriter:
    """
    Streams frames to a dataset directory.

    Image payloads are written concurrently with aiofiles; the index is
    written sorted by (frame, camera) on close so output bytes never depend
    on completion order.
    """

    def __init__(self, root, skeleton: SkeletonSpec, cameras: List[CameraParams],
                 header: Optional[Dict[str, Any]] = None):
        self.root = Path(root)
        self.skeleton = skeleton
        self.cameras = cameras
        self.header = dict(header or {})
        self.records: List[Dict[str, Any]] = []
        self.image_shape: Optional[tuple] = None

    async def __aenter__(self) -> 'DatasetWriter':
        (self.root / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            await self.close()

    async def write_frame(self, frame: MultiviewFrame):
        records = frame_records(frame)
        for view, record in enumerate(records):
            image = frame.images[view]
            if image is None:
                raise DataError(f"Frame {frame.frame_id} view {view} has no image to write", frame=frame.frame_id)
            self.image_shape = tuple(image.shape)
            async with aiofiles.open(self.root / record['image'], 'wb') as f:
                await f.write(np.asarray(image, dtype=IMAGE_DTYPE).tobytes())
        self.records.extend(records)

    async def close(self):
        self.records.sort(key=lambda r: (r['frame'], r['camera']))
        counts = {name: len({r['frame'] for r in self.records if r['split'] == name}) for name in SPLITS}
        header = {
            'schema_version': SCHEMA_VERSION,
            'image_shape': list(self.image_shape or ()),
            'image_dtype': 'float32-le',
            'num_cameras': len(self.cameras),
            'num_frames': len({r['frame'] for r in self.records}),
            'splits': counts,
            'skeleton': self.skeleton.to_dict(),
        }
        header.update(self.header)
        lines = ''.join(json.dumps(r, sort_keys=True) + '\n' for r in self.records)
        async with aiofiles.open(self.root / INDEX_FILE, 'w', encoding='utf-8') as f:
            await f.write(lines)
        async with aiofiles.open(self.root / HEADER_FILE, 'w', encoding='utf-8') as f:
            await f.write(json.dumps(header, indent=2, sort_keys=True) + '\n')
        save_rig(self.root / RIG_FILE, self.cameras)
        logger.info(f"Wrote {header['num_frames']} frames to {self.root}")


async def generate_dataset_async(root, config: GenerateConfig, skeleton: Optional[SkeletonSpec] = None,
                                 threads: int = 4, progress: Optional[Callable[[int], None]] = None) -> Path:
    """
    Generate, split and store a synthetic dataset.

    Frames are produced in worker threads bounded by a semaphore; per-frame
    seeds make the output independent of scheduling.
    """
    skeleton = skeleton or default_skeleton()
    cameras = rig_from_config(config.rig)
    model = build_pose_model(skeleton, config.pose_model)
    train_ids = list(range(config.frames))
    test_ids = list(range(config.frames, config.frames + config.test_frames))
    if not train_ids:
        raise ConfigError("Dataset needs at least one training frame")
    labels = assign_splits(train_ids, config.label_ratio, config.seed, config.primary_ratio)
    labels.update({i: TEST for i in test_ids})

    header = {'seed': config.seed, 'generator': config.to_dict()}
    semaphore = asyncio.Semaphore(max(int(threads), 1))

    async with DatasetWriter(root, skeleton, cameras, header) as writer:
        async def produce(frame_id: int):
            async with semaphore:
                frame = await asyncio.to_thread(generate_frame, frame_id, skeleton, model, cameras,
                                                config.render, config.seed)
                await writer.write_frame(apply_split(frame, labels[frame_id]))
                if progress:
                    progress(1)

        ids = train_ids + test_ids
        results = await asyncio.gather(*(produce(i) for i in ids), return_exceptions=True)
        failures = [(i, r) for i, r in zip(ids, results) if isinstance(r, Exception)]
        if failures:
            for frame_id, error in failures[:5]:
                logger.error(f"Frame {frame_id} failed: {error}")
            raise DataError(f"{len(failures)} frames failed to generate", failed=[i for i, _ in failures[:20]])
    return Path(root)


def generate_dataset(root, config: GenerateConfig, skeleton: Optional[SkeletonSpec] = None,
                     threads: int = 4, progress: Optional[Callable[[int], None]] = None) -> Path:
    return asyncio.run(generate_dataset_async(root, config, skeleton, threads, progress))


def write_frames(root, frames: Sequence[MultiviewFrame], skeleton: SkeletonSpec, cameras: List[CameraParams],
                 header: Optional[Dict[str, Any]] = None) -> Path:
    """Store already generated frames (images must be in memory)"""
    async def run():
        async with DatasetWriter(root, skeleton, cameras, header) as writer:
            for frame in frames:
                await writer.write_frame(frame)
    asyncio.run(run())
    return Path(root)


def load_dataset(root) -> Dataset:
    """
    Read a dataset directory written by DatasetWriter or converted from real captures.

    Raises:
        SchemaVersionError: header version differs from this library's
        DataError: missing files or malformed records
    """
    root = Path(root)
    header_path = root / HEADER_FILE
    if not header_path.is_file():
        raise DataError(f"Not a dataset directory (missing {HEADER_FILE}): {root}", path=str(root))
    try:
        header = json.loads(header_path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise DataError(f"Malformed {header_path}: {e}", path=str(header_path))
    version = header.get('schema_version')
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"Dataset schema version {version} is not supported (expected {SCHEMA_VERSION})",
                                 path=str(root), found=version, expected=SCHEMA_VERSION)
    skeleton = SkeletonSpec.from_dict(header.get('skeleton', default_skeleton().to_dict()))
    cameras = load_rig(root / RIG_FILE)
    image_shape = tuple(header.get('image_shape') or ()) or None

    grouped: Dict[int, List[Dict[str, Any]]] = {}
    index_path = root / INDEX_FILE
    try:
        with open(index_path, 'r', encoding='utf-8') as f:
            for line_num, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise DataError(f"{index_path}:{line_num}: {e}", path=str(index_path), line=line_num)
                validate_record(record)
                grouped.setdefault(int(record['frame']), []).append(record)
    except OSError as e:
        raise DataError(f"Cannot read {index_path}: {e}", path=str(index_path))
    if not grouped:
        raise EmptyDatasetError(f"Dataset {root} has no frames", path=str(root))

    frames = []
    for frame_id in sorted(grouped):
        records = sorted(grouped[frame_id], key=lambda r: r['camera'])
        num_views = len(cameras)
        paths: List[Optional[Path]] = [None] * num_views
        poses: List[Optional[Pose2D]] = [None] * num_views
        detections: List[Optional[Pose2D]] = [None] * num_views
        pose_3d = None
        for record in records:
            view = int(record['camera'])
            if not 0 <= view < num_views:
                raise DataError(f"Frame {frame_id} references camera {view} outside the rig", frame=frame_id)
            paths[view] = root / record['image']
            if 'pose2d' in record:
                poses[view] = _pose2d_from_record(record['pose2d'], skeleton.num_secondary)
            if 'detected' in record:
                detections[view] = _pose2d_from_record(record['detected'], skeleton.num_secondary)
            if 'pose3d' in record:
                pose_3d = Pose3D(record['pose3d']['primary'], record['pose3d']['secondary'])
        frames.append(MultiviewFrame(frame_id=frame_id, num_views=num_views, image_paths=paths, poses_2d=poses,
                                     detections=detections, pose_3d=pose_3d, split=records[0]['split'],
                                     image_shape=image_shape))
    logger.debug(f"Loaded {len(frames)} frames from {root}")
    return Dataset(root=root, header=header, skeleton=skeleton, cameras=cameras, frames=frames)
