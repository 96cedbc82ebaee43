"""Core pipeline modules."""

from .geometry import (
    CameraCalibration,
    ImagePoint,
    PointOfInterest,
    RadarDetection,
    VehiclePoint,
    back_project,
    pinhole_calibration,
    project,
    project_frame,
    project_point,
)
from .proposals import (
    AnchorConfig,
    AnchorTemplate,
    BoundingBox,
    ProposalConfig,
    ProposalSet,
    ScaleParams,
    anchor_templates,
    place_anchor,
    propose,
    scale_factor,
)
from .dataset import Frame, SynthConfig, load_dataset, save_dataset, split_frames, synthesize
from .evaluation import EvalConfig, EvalReport, evaluate, iou
from .calibration import CalibrationReport, GridSpec, grid_search, objective, prepare_dataset
from .bench import BenchReport, run_benchmark

__all__ = [
    'CameraCalibration',
    'ImagePoint',
    'PointOfInterest',
    'RadarDetection',
    'VehiclePoint',
    'back_project',
    'pinhole_calibration',
    'project',
    'project_frame',
    'project_point',
    'AnchorConfig',
    'AnchorTemplate',
    'BoundingBox',
    'ProposalConfig',
    'ProposalSet',
    'ScaleParams',
    'anchor_templates',
    'place_anchor',
    'propose',
    'scale_factor',
    'Frame',
    'SynthConfig',
    'load_dataset',
    'save_dataset',
    'split_frames',
    'synthesize',
    'EvalConfig',
    'EvalReport',
    'evaluate',
    'iou',
    'CalibrationReport',
    'GridSpec',
    'grid_search',
    'objective',
    'prepare_dataset',
    'BenchReport',
    'run_benchmark',
]
