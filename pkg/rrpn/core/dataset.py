"""
Frame Datasets

Frames are stored one per line as JSON; the cameras they reference live in a
sidecar calibration file (`<name>.calib.json` next to `<name>.jsonl`).

The synthetic generator runs the proposal pipeline backwards: it places
objects in front of a pinhole camera, projects them, builds ground-truth boxes
as scaled anchors using known distance-law parameters, and back-projects the
(optionally jittered) pixels into radar returns. With zero noise every
ground-truth box is reproduced exactly by `propose` under the true parameters.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .geometry import (
    CameraCalibration,
    RadarDetection,
    VehiclePoint,
    back_project,
    pinhole_calibration,
    project,
    project_point,
)
from .proposals import (
    AnchorConfig,
    BoundingBox,
    ScaleParams,
    anchor_templates,
    place_anchor,
    scale_factor,
)

CLASSES = ('car', 'truck', 'person', 'motorcycle', 'bicycle', 'bus')

PathLike = Union[str, Path]


class DatasetError(ValueError):
    """Base class for dataset loading problems."""


class DatasetParseError(DatasetError):
    """A line is not a well-formed frame record."""


class DatasetValidationError(DatasetError):
    """A record parsed but breaks a frame invariant."""


class MissingCalibrationError(DatasetError):
    """A frame references a calibration the sidecar does not define."""


@dataclass(frozen=True)
class Frame:
    """
    One camera image's worth of radar returns and ground truth.

    Attributes:
        frame_id: Unique within a dataset
        detections: Radar returns in vehicle coordinates
        gt_boxes: Ground-truth boxes in pixels
        gt_classes: One label per ground-truth box
        calib_ref: Key of the camera calibration
    """
    frame_id: int
    detections: Tuple[RadarDetection, ...] = ()
    gt_boxes: Tuple[BoundingBox, ...] = ()
    gt_classes: Tuple[str, ...] = ()
    calib_ref: str = 'front'

    def __post_init__(self):
        object.__setattr__(self, 'detections', tuple(self.detections))
        object.__setattr__(self, 'gt_boxes', tuple(self.gt_boxes))
        object.__setattr__(self, 'gt_classes', tuple(self.gt_classes))
        if len(self.gt_boxes) != len(self.gt_classes):
            raise ValueError(
                f"Frame {self.frame_id}: {len(self.gt_boxes)} boxes but {len(self.gt_classes)} classes"
            )
        unknown = set(self.gt_classes) - set(CLASSES)
        if unknown:
            raise ValueError(f"Frame {self.frame_id}: unknown classes {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            'frame_id': self.frame_id,
            'detections': [
                {
                    'x': d.position.x,
                    'y': d.position.y,
                    'z': d.position.z,
                    'range': d.range,
                    'range_rate': d.range_rate,
                    'id': d.id,
                }
                for d in self.detections
            ],
            'gt': [
                {'box': box.to_list(), 'class': cls}
                for box, cls in zip(self.gt_boxes, self.gt_classes)
            ],
            'calib_ref': self.calib_ref,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Frame":
        """Build a frame; KeyError/TypeError mean a malformed record."""
        detections = [
            RadarDetection(
                position=VehiclePoint(float(d['x']), float(d['y']), float(d['z'])),
                range=None if d.get('range') is None else float(d['range']),
                range_rate=float(d.get('range_rate', 0.0)),
                id=int(d['id']),
            )
            for d in data['detections']
        ]
        gt = data['gt']
        return cls(
            frame_id=int(data['frame_id']),
            detections=detections,
            gt_boxes=[BoundingBox.from_list(g['box']) for g in gt],
            gt_classes=[g['class'] for g in gt],
            calib_ref=str(data['calib_ref']),
        )


def calibration_path(path: PathLike) -> Path:
    """Sidecar calibration file for a dataset path."""
    return Path(path).with_suffix('.calib.json')


def _coerce_record(data: dict) -> dict:
    """
    Convert a decoded record's fields to their Python types.

    Only the shape and types are checked here; KeyError, TypeError and
    ValueError all mean the record is malformed.
    """
    return {
        'frame_id': int(data['frame_id']),
        'detections': [
            {
                'x': float(d['x']),
                'y': float(d['y']),
                'z': float(d['z']),
                'range': None if d.get('range') is None else float(d['range']),
                'range_rate': float(d.get('range_rate', 0.0)),
                'id': int(d['id']),
            }
            for d in data['detections']
        ],
        'gt': [
            {'box': [float(x) for x in g['box']], 'class': str(g['class'])}
            for g in data['gt']
        ],
        'calib_ref': str(data['calib_ref']),
    }


def _parse_record(line: str, path: PathLike, line_no: int) -> Frame:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}:{line_no}: malformed JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise DatasetParseError(f"{path}:{line_no}: expected a JSON object")

    missing = {'frame_id', 'detections', 'gt', 'calib_ref'} - set(data)
    if missing:
        raise DatasetParseError(f"{path}:{line_no}: missing fields {sorted(missing)}")

    try:
        record = _coerce_record(data)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DatasetParseError(f"{path}:{line_no}: malformed frame record: {exc!r}") from exc
    try:
        return Frame.from_dict(record)
    except ValueError as exc:
        raise DatasetValidationError(f"{path}:{line_no}: {exc}") from exc


def load_calibrations(path: PathLike) -> Dict[str, CameraCalibration]:
    """Read a calibration file; a missing file is an empty map."""
    path = Path(path)
    if not path.exists():
        return {}
    try:
        with open(path) as f:
            data = json.load(f)
        return {ref: CameraCalibration.from_dict(c) for ref, c in data.items()}
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}: malformed calibration JSON: {exc.msg}") from exc
    except (KeyError, TypeError, AttributeError) as exc:
        raise DatasetParseError(f"{path}: malformed calibration record: {exc!r}") from exc
    except ValueError as exc:
        raise DatasetValidationError(f"{path}: {exc}") from exc


def load_dataset(
    path: PathLike,
    calib_path: Optional[PathLike] = None
) -> Tuple[List[Frame], Dict[str, CameraCalibration]]:
    """
    Load frames and their calibrations.

    Args:
        path: Frame JSONL file
        calib_path: Calibration JSON (default: the sidecar next to path)

    Returns:
        (frames in file order, calib_ref -> CameraCalibration)

    Raises:
        DatasetParseError, DatasetValidationError, MissingCalibrationError
        on the first offending line
    """
    calibs = load_calibrations(calib_path or calibration_path(path))
    frames = []
    seen_ids = set()

    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            frame = _parse_record(line, path, line_no)
            if frame.frame_id in seen_ids:
                raise DatasetValidationError(f"{path}:{line_no}: duplicate frame_id {frame.frame_id}")
            if frame.calib_ref not in calibs:
                raise MissingCalibrationError(
                    f"{path}:{line_no}: unknown calib_ref '{frame.calib_ref}'"
                )
            seen_ids.add(frame.frame_id)
            frames.append(frame)

    return frames, calibs


def save_dataset(
    frames: List[Frame],
    calibs: Dict[str, CameraCalibration],
    path: PathLike,
    calib_path: Optional[PathLike] = None
):
    """Write frames as JSONL and the calibrations as the sidecar file."""
    with open(path, 'w') as f:
        for frame in frames:
            f.write(json.dumps(frame.to_dict()) + '\n')

    with open(calib_path or calibration_path(path), 'w') as f:
        json.dump({ref: c.to_dict() for ref, c in calibs.items()}, f, sort_keys=True, indent=2)


def split_frames(
    frames: List[Frame],
    train_fraction: float = 0.85,
    seed: int = 0
) -> Tuple[List[Frame], List[Frame]]:
    """
    Random train/test split; each part keeps the original frame order.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    n_train = int(round(train_fraction * len(frames)))
    order = np.random.default_rng(seed).permutation(len(frames))
    train_idx = set(order[:n_train].tolist())
    train = [f for i, f in enumerate(frames) if i in train_idx]
    test = [f for i, f in enumerate(frames) if i not in train_idx]
    return train, test


@dataclass(frozen=True)
class SynthConfig:
    """
    Synthetic scene parameters.

    Attributes:
        n_frames: Number of frames
        pois_per_frame: (min, max) objects per frame, inclusive
        distance_range: (d_min, d_max) object range in meters
        true_params: Distance law the ground truth is built with
        poi_jitter_px: Std of the pixel noise on radar return placement
        size_jitter: Std of the multiplicative noise on ground-truth size
        seed: RNG seed; identical seeds give identical datasets
        image_width, image_height, focal, camera_height: Pinhole camera
        radar_height: z of every radar return in meters
        calib_ref: Name of the generated calibration
        anchors: Templates ground-truth shapes are drawn from
    """
    n_frames: int = 100
    pois_per_frame: Tuple[int, int] = (1, 8)
    distance_range: Tuple[float, float] = (5.0, 60.0)
    true_params: ScaleParams = ScaleParams(8.0, 0.4)
    poi_jitter_px: float = 0.0
    size_jitter: float = 0.0
    seed: int = 0
    image_width: int = 1600
    image_height: int = 900
    focal: float = 1000.0
    camera_height: float = 1.5
    radar_height: float = 0.5
    calib_ref: str = 'front'
    anchors: AnchorConfig = field(default_factory=AnchorConfig)

    def __post_init__(self):
        object.__setattr__(self, 'pois_per_frame', tuple(int(x) for x in self.pois_per_frame))
        object.__setattr__(self, 'distance_range', tuple(float(x) for x in self.distance_range))

        if self.n_frames < 0:
            raise ValueError("n_frames must be >= 0")
        lo, hi = self.pois_per_frame
        if not 0 <= lo <= hi:
            raise ValueError(f"pois_per_frame must satisfy 0 <= min <= max, got {self.pois_per_frame}")
        d_lo, d_hi = self.distance_range
        if not 0 < d_lo < d_hi:
            raise ValueError(f"distance_range must satisfy 0 < min < max, got {self.distance_range}")
        if not self.true_params.is_positive_on(d_lo, d_hi):
            raise ValueError(f"true_params {self.true_params} give non-positive scales on {self.distance_range}")
        if self.poi_jitter_px < 0 or self.size_jitter < 0:
            raise ValueError("Noise standard deviations must be >= 0")
        if self.radar_height >= self.camera_height:
            raise ValueError("radar_height must be below camera_height")

    def to_dict(self) -> dict:
        return {
            'n_frames': self.n_frames,
            'pois_per_frame': list(self.pois_per_frame),
            'distance_range': list(self.distance_range),
            'true_params': self.true_params.to_dict(),
            'noise': {'poi_px': self.poi_jitter_px, 'size_frac': self.size_jitter},
            'seed': self.seed,
            'camera': {
                'width': self.image_width,
                'height': self.image_height,
                'focal': self.focal,
                'camera_height': self.camera_height,
                'radar_height': self.radar_height,
                'calib_ref': self.calib_ref,
            },
            'anchors': self.anchors.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        """
        Build from the JSON layout of `to_dict`; every key is optional.

        Raises:
            ValueError: on unknown keys, wrong JSON types or invalid values
        """
        if not isinstance(data, dict):
            raise ValueError("Synth config must be a JSON object")
        unknown = set(data) - {
            'n_frames', 'pois_per_frame', 'distance_range', 'true_params',
            'noise', 'seed', 'camera', 'anchors',
        }
        if unknown:
            raise ValueError(f"Unknown synth config keys: {sorted(unknown)}")
        for key in ('true_params', 'noise', 'camera', 'anchors'):
            if not isinstance(data.get(key, {}), dict):
                raise ValueError(f"Synth config '{key}' must be a JSON object")

        try:
            return cls(**cls._kwargs_from(data))
        except (TypeError, AttributeError) as exc:
            raise ValueError(f"Malformed synth config: {exc}") from exc

    @staticmethod
    def _kwargs_from(data: dict) -> dict:
        kwargs = {}
        for key in ('n_frames', 'seed'):
            if key in data:
                kwargs[key] = int(data[key])
        for key in ('pois_per_frame', 'distance_range'):
            if key in data:
                kwargs[key] = tuple(data[key])
        if 'true_params' in data:
            kwargs['true_params'] = ScaleParams.from_dict(data['true_params'])
        noise = data.get('noise', {})
        if 'poi_px' in noise:
            kwargs['poi_jitter_px'] = float(noise['poi_px'])
        if 'size_frac' in noise:
            kwargs['size_jitter'] = float(noise['size_frac'])
        camera = data.get('camera', {})
        for src, dst in (('width', 'image_width'), ('height', 'image_height')):
            if src in camera:
                kwargs[dst] = int(camera[src])
        for key in ('focal', 'camera_height', 'radar_height'):
            if key in camera:
                kwargs[key] = float(camera[key])
        if 'calib_ref' in camera:
            kwargs['calib_ref'] = str(camera['calib_ref'])
        if 'anchors' in data:
            kwargs['anchors'] = AnchorConfig.from_dict(data['anchors'])
        return kwargs


# Placement attempts per object before the config is declared unsatisfiable
MAX_PLACEMENT_ATTEMPTS = 200


def _inside(box: BoundingBox, calib: CameraCalibration) -> bool:
    return box.x1 >= 0 and box.y1 >= 0 and box.x2 <= calib.image_width and box.y2 <= calib.image_height


def _synth_object(
    rng: np.random.Generator,
    cfg: SynthConfig,
    calib: CameraCalibration,
    templates: list,
    det_id: int,
    min_area: float
) -> Tuple[RadarDetection, BoundingBox, str]:
    """Draw one object until its radar return and box both land in the image."""
    d_lo, d_hi = cfg.distance_range
    half_fov = math.atan((cfg.image_width / 2.0) / cfg.focal)

    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        d = rng.uniform(d_lo, d_hi)
        theta = rng.uniform(-half_fov, half_fov)
        template = templates[rng.integers(len(templates))]
        label = CLASSES[rng.integers(len(CLASSES))]
        size_mult = 1.0 + cfg.size_jitter * rng.standard_normal()
        du, dv = cfg.poi_jitter_px * rng.standard_normal(2)
        range_rate = rng.uniform(-15.0, 15.0)

        true_point = VehiclePoint(d * math.cos(theta), d * math.sin(theta), cfg.radar_height)
        true_pixel = project_point(true_point, calib)
        if true_pixel is None:
            continue

        # the object is where a noise-free radar would put it
        clean_pos = back_project(true_pixel.u, true_pixel.v, cfg.radar_height, calib)
        clean_det = RadarDetection(clean_pos, math.hypot(clean_pos.x, clean_pos.y), range_rate, det_id)
        clean_poi = project(clean_det, calib)
        if clean_poi is None or size_mult <= 0.05:
            continue

        scale = scale_factor(clean_det.distance, cfg.true_params) * size_mult
        box = place_anchor(template, clean_poi, scale)
        if not _inside(box, calib) or box.area < min_area:
            continue

        if du == 0.0 and dv == 0.0:
            det = clean_det
        else:
            pos = back_project(true_pixel.u + du, true_pixel.v + dv, cfg.radar_height, calib)
            det = RadarDetection(pos, math.hypot(pos.x, pos.y), range_rate, det_id)
            if project(det, calib) is None or not d_lo <= det.distance <= d_hi:
                continue

        return det, box, label

    raise ValueError(
        f"Could not place an object inside the image after {MAX_PLACEMENT_ATTEMPTS} attempts; "
        "check distance_range, true_params and anchor sizes"
    )


def synthesize(cfg: SynthConfig, min_area: float = 16.0) -> Tuple[List[Frame], CameraCalibration]:
    """
    Generate a synthetic dataset with the forward model.

    Args:
        cfg: Scene parameters
        min_area: Smallest ground-truth area in px^2, so that noise-free
            boxes survive proposal filtering

    Returns:
        (frames, the calibration every frame references)
    """
    rng = np.random.default_rng(cfg.seed)
    calib = pinhole_calibration(
        cfg.image_width, cfg.image_height, cfg.focal, camera_height=cfg.camera_height
    )
    templates = anchor_templates(cfg.anchors)
    lo, hi = cfg.pois_per_frame

    frames = []
    for frame_id in range(cfg.n_frames):
        n_objects = int(rng.integers(lo, hi + 1))
        objects = [_synth_object(rng, cfg, calib, templates, i, min_area) for i in range(n_objects)]
        frames.append(Frame(
            frame_id=frame_id,
            detections=[det for det, _, _ in objects],
            gt_boxes=[box for _, box, _ in objects],
            gt_classes=[label for _, _, label in objects],
            calib_ref=cfg.calib_ref,
        ))

    return frames, calib
