"""
Distance-Law Calibration

Finds (alpha, beta) of S(d) = alpha / d + beta by exhaustive grid search,
maximizing the summed best IOU of every ground-truth box against the
proposals generated with those parameters:

    sum over frames i, sum over GT boxes j, of max over proposals k IOU_ijk

The grid evaluator works on whole datasets at once. It uses the same
placement, clipping, capping and IOU kernels as `propose` and `iou_matrix`,
so every grid entry matches an independent `objective` call.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import Frame
from .evaluation import best_ious, paired_iou
from .geometry import CameraCalibration, PointOfInterest, project_frame
from .proposals import (
    AnchorConfig,
    ProposalConfig,
    ScaleParams,
    anchor_templates,
    cap_mask,
    clip_boxes,
    place_anchors,
    propose,
    scale_factors,
    template_offsets,
)

Sample = Tuple[Frame, List[PointOfInterest]]
Calibrations = Union[CameraCalibration, Mapping[str, CameraCalibration]]

# Upper bound on (GT, proposal) pairs held in memory per evaluation chunk
MAX_PAIRS_PER_CHUNK = 2_000_000


def _calib_for(frame: Frame, calib: Calibrations) -> CameraCalibration:
    if isinstance(calib, CameraCalibration):
        return calib
    return calib[frame.calib_ref]


def prepare_dataset(
    frames: Sequence[Frame],
    calib: Calibrations,
    config: Optional[ProposalConfig] = None
) -> List[Sample]:
    """Project every frame's detections, pairing frames with their POIs."""
    config = config or ProposalConfig()
    return [
        (f, project_frame(f.detections, _calib_for(f, calib), config.margin_px, config.epsilon_w))
        for f in frames
    ]


@dataclass(frozen=True)
class GridSpec:
    """
    Search grid, each axis given as (lo, hi, steps).

    steps == 1 means a single value and requires lo == hi.
    """
    alpha_range: Tuple[float, float, int] = (0.0, 2000.0, 51)
    beta_range: Tuple[float, float, int] = (0.0, 2.0, 41)

    def __post_init__(self):
        for name in ('alpha_range', 'beta_range'):
            lo, hi, steps = getattr(self, name)
            lo, hi, steps = float(lo), float(hi), int(steps)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"{name} bounds must be finite")
            if steps < 1:
                raise ValueError(f"{name} needs at least one step")
            if steps == 1 and lo != hi:
                raise ValueError(f"{name} with one step needs lo == hi")
            if steps >= 2 and not lo < hi:
                raise ValueError(f"{name} needs lo < hi, got {lo}, {hi}")
            object.__setattr__(self, name, (lo, hi, steps))

    @property
    def alpha_values(self) -> np.ndarray:
        lo, hi, steps = self.alpha_range
        return np.linspace(lo, hi, steps)

    @property
    def beta_values(self) -> np.ndarray:
        lo, hi, steps = self.beta_range
        return np.linspace(lo, hi, steps)

    def feasible_mask(self, d_min: float, d_max: float) -> np.ndarray:
        """(A, B) mask of grid points whose scale law is positive on [d_min, d_max]."""
        a = self.alpha_values[:, None]
        b = self.beta_values[None, :]
        return (a / d_min + b > 0) & (a / d_max + b > 0)

    def zoomed(self, alpha: float, beta: float) -> "GridSpec":
        """Same step counts over +/- one step around (alpha, beta), kept inside this grid."""
        def zoom(axis, center):
            lo, hi, steps = axis
            if steps == 1:
                return axis
            step = (hi - lo) / (steps - 1)
            return (max(lo, center - step), min(hi, center + step), steps)
        return GridSpec(zoom(self.alpha_range, alpha), zoom(self.beta_range, beta))

    def to_dict(self) -> dict:
        return {'alpha_range': list(self.alpha_range), 'beta_range': list(self.beta_range)}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        if not isinstance(data, dict):
            raise ValueError("Grid config must be a JSON object")
        unknown = set(data) - {'alpha_range', 'beta_range'}
        if unknown:
            raise ValueError(f"Unknown grid keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})


@dataclass
class CalibrationReport:
    """Outcome of a grid search."""
    best: ScaleParams
    objective: float
    grid_objectives: np.ndarray
    frames_used: int
    alpha_values: np.ndarray
    beta_values: np.ndarray
    total_gt: int = 0
    coarse: Optional["CalibrationReport"] = None

    @property
    def mean_best_iou(self) -> float:
        return self.objective / self.total_gt if self.total_gt else 0.0

    def __str__(self) -> str:
        return f"""
Calibration Results
{'=' * 60}
Frames used: {self.frames_used}
Ground-truth boxes: {self.total_gt}
Grid: {len(self.alpha_values)} alpha x {len(self.beta_values)} beta

Best alpha: {self.best.alpha:g}
Best beta: {self.best.beta:g}
Objective: {self.objective:.6f}
Mean best IOU: {self.mean_best_iou:.4f}
"""

    def to_dict(self) -> dict:
        grid = [[None if math.isnan(x) else x for x in row] for row in self.grid_objectives.tolist()]
        data = {
            'best': self.best.to_dict(),
            'objective': self.objective,
            'frames_used': self.frames_used,
            'total_gt': self.total_gt,
            'alpha_values': self.alpha_values.tolist(),
            'beta_values': self.beta_values.tolist(),
            'grid_objectives': grid,
        }
        if self.coarse is not None:
            data['coarse'] = self.coarse.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationReport":
        grid = np.array(
            [[np.nan if x is None else x for x in row] for row in data['grid_objectives']],
            dtype=float,
        )
        return cls(
            best=ScaleParams.from_dict(data['best']),
            objective=float(data['objective']),
            grid_objectives=grid,
            frames_used=int(data['frames_used']),
            alpha_values=np.array(data['alpha_values'], dtype=float),
            beta_values=np.array(data['beta_values'], dtype=float),
            total_gt=int(data.get('total_gt', 0)),
            coarse=cls.from_dict(data['coarse']) if data.get('coarse') else None,
        )

    def save_json(self, path: Union[str, Path]):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_json(cls, path: Union[str, Path]) -> "CalibrationReport":
        with open(path) as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: calibration report must be a JSON object")
        try:
            return cls.from_dict(data)
        except (TypeError, AttributeError) as exc:
            raise ValueError(f"{path}: malformed calibration report: {exc}") from exc


def objective(
    dataset: Sequence[Sample],
    params: ScaleParams,
    cfg: AnchorConfig,
    calib: Calibrations,
    config: Optional[ProposalConfig] = None
) -> float:
    """
    Summed best IOU of every ground-truth box over the frame's proposals.

    Frames without ground truth contribute nothing; ground-truth boxes in
    frames without proposals contribute 0 each.
    """
    config = config or ProposalConfig()
    offsets = template_offsets(anchor_templates(cfg))
    total = 0.0
    for frame, pois in dataset:
        if not frame.gt_boxes:
            continue
        pset = propose(pois, cfg, params, _calib_for(frame, calib), config, frame.frame_id, offsets)
        gt = np.array([b.to_list() for b in frame.gt_boxes], dtype=float)
        total += float(best_ious(gt, pset.box_array).sum())
    return total


@dataclass
class _Chunk:
    """Concatenated arrays for a run of frames, built once per search."""
    u: np.ndarray
    v: np.ndarray
    d: np.ndarray
    box_width: np.ndarray
    box_height: np.ndarray
    box_frame: np.ndarray
    gt: np.ndarray
    pair_gt: np.ndarray
    pair_box: np.ndarray
    segment_starts: np.ndarray


def _build_chunk(samples: Sequence[Sample], calib: Calibrations, n_templates: int) -> _Chunk:
    u, v, d, widths, heights, poi_frame = [], [], [], [], [], []
    gt_rows, pair_gt, pair_box = [], [], []
    n_pois = 0

    for local_frame, (frame, pois) in enumerate(samples):
        cam = _calib_for(frame, calib)
        first_box = n_pois * n_templates
        n_boxes = len(pois) * n_templates
        for p in pois:
            u.append(p.u)
            v.append(p.v)
            d.append(p.distance)
            widths.append(cam.image_width)
            heights.append(cam.image_height)
            poi_frame.append(local_frame)
        n_pois += len(pois)

        if n_boxes:
            boxes = np.arange(first_box, first_box + n_boxes)
            for box in frame.gt_boxes:
                pair_gt.append(np.full(n_boxes, len(gt_rows)))
                pair_box.append(boxes)
                gt_rows.append(box.to_list())
        else:
            gt_rows.extend(box.to_list() for box in frame.gt_boxes)

    pair_gt = np.concatenate(pair_gt) if pair_gt else np.zeros(0, dtype=np.int64)
    pair_box = np.concatenate(pair_box) if pair_box else np.zeros(0, dtype=np.int64)
    segment_starts = np.flatnonzero(np.r_[True, pair_gt[1:] != pair_gt[:-1]]) if len(pair_gt) else pair_gt

    return _Chunk(
        u=np.array(u, dtype=float),
        v=np.array(v, dtype=float),
        d=np.array(d, dtype=float),
        box_width=np.repeat(np.array(widths, dtype=float), n_templates),
        box_height=np.repeat(np.array(heights, dtype=float), n_templates),
        box_frame=np.repeat(np.array(poi_frame, dtype=np.int64), n_templates),
        gt=np.array(gt_rows, dtype=float).reshape(-1, 4),
        pair_gt=pair_gt,
        pair_box=pair_box,
        segment_starts=segment_starts,
    )


def _build_chunks(samples: Sequence[Sample], calib: Calibrations, n_templates: int) -> List[_Chunk]:
    chunks, current, pairs = [], [], 0
    for sample in samples:
        frame, pois = sample
        frame_pairs = len(frame.gt_boxes) * len(pois) * n_templates
        if current and pairs + frame_pairs > MAX_PAIRS_PER_CHUNK:
            chunks.append(_build_chunk(current, calib, n_templates))
            current, pairs = [], 0
        current.append(sample)
        pairs += frame_pairs
    if current:
        chunks.append(_build_chunk(current, calib, n_templates))
    return chunks


def _chunk_objective(
    chunk: _Chunk,
    alpha: float,
    beta: float,
    offsets: np.ndarray,
    config: ProposalConfig
) -> float:
    if len(chunk.pair_gt) == 0:
        return 0.0
    scales = scale_factors(chunk.d, alpha, beta, config.d_min)
    boxes = place_anchors(chunk.u, chunk.v, scales, offsets)
    clipped, keep = clip_boxes(
        boxes, chunk.box_width, chunk.box_height, config.min_area, config.min_visible_frac
    )
    keep = cap_mask(keep, chunk.box_frame, config.max_proposals)

    ious = paired_iou(chunk.gt[chunk.pair_gt], clipped[chunk.pair_box])
    ious[~keep[chunk.pair_box]] = 0.0
    return float(np.maximum.reduceat(ious, chunk.segment_starts).sum())


def _evaluate_grid(
    chunks: List[_Chunk],
    grid: GridSpec,
    offsets: np.ndarray,
    config: ProposalConfig,
    threads: int
) -> np.ndarray:
    alphas, betas = grid.alpha_values, grid.beta_values
    feasible = grid.feasible_mask(config.d_min, config.d_max)
    if not feasible.any():
        raise ValueError(
            f"No grid point gives a positive scale law on [{config.d_min}, {config.d_max}] m"
        )

    result = np.full(feasible.shape, np.nan)
    points = list(zip(*np.nonzero(feasible)))

    def evaluate_point(index):
        i, j = index
        return index, sum(_chunk_objective(c, alphas[i], betas[j], offsets, config) for c in chunks)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            evaluated = list(pool.map(evaluate_point, points))
    else:
        evaluated = [evaluate_point(p) for p in points]

    for (i, j), value in evaluated:
        result[i, j] = value
    return result


def _search(
    samples: List[Sample],
    chunks: List[_Chunk],
    grid: GridSpec,
    offsets: np.ndarray,
    config: ProposalConfig,
    threads: int
) -> CalibrationReport:
    grid_objectives = _evaluate_grid(chunks, grid, offsets, config, threads)
    # nanargmax takes the first maximum in row-major order: smallest alpha, then beta
    flat = int(np.nanargmax(grid_objectives))
    i, j = np.unravel_index(flat, grid_objectives.shape)
    alphas, betas = grid.alpha_values, grid.beta_values

    return CalibrationReport(
        best=ScaleParams(float(alphas[i]), float(betas[j])),
        objective=float(grid_objectives[i, j]),
        grid_objectives=grid_objectives,
        frames_used=len(samples),
        alpha_values=alphas,
        beta_values=betas,
        total_gt=sum(len(f.gt_boxes) for f, _ in samples),
    )


def grid_search(
    dataset: Sequence[Sample],
    grid: GridSpec,
    cfg: AnchorConfig,
    calib: Calibrations,
    config: Optional[ProposalConfig] = None,
    threads: int = 1,
    exclude_empty: bool = False,
    refine: bool = False
) -> CalibrationReport:
    """
    Exhaustive search for the distance-law parameters.

    Args:
        dataset: (frame, POIs) pairs, see prepare_dataset
        grid: Search grid
        cfg: Anchor shapes
        calib: One calibration, or a calib_ref -> calibration map
        config: Clipping and cap settings
        threads: Grid points evaluated in parallel when > 1
        exclude_empty: Drop frames without POIs before searching
        refine: Search once more on a grid zoomed around the coarse optimum

    Returns:
        CalibrationReport; ties go to the smallest alpha, then beta

    Raises:
        ValueError: on an empty dataset or a grid without feasible points
    """
    config = config or ProposalConfig()
    samples = [s for s in dataset if s[1]] if exclude_empty else list(dataset)
    if not samples:
        raise ValueError("Calibration needs at least one frame")

    offsets = template_offsets(anchor_templates(cfg))
    chunks = _build_chunks(samples, calib, len(offsets))

    report = _search(samples, chunks, grid, offsets, config, threads)
    if refine:
        fine_grid = grid.zoomed(report.best.alpha, report.best.beta)
        fine = _search(samples, chunks, fine_grid, offsets, config, threads)
        fine.coarse = report
        report = fine
    return report
