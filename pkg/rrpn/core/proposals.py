"""
Radar Region Proposals

Generates anchor boxes around every Point of Interest, scales them with the
distance law S(d) = alpha / d + beta, clips them to the image and caps the
per-frame proposal count.

Placement, clipping and capping are written as array kernels that the
calibration grid search reuses across whole datasets, so a box proposed for
one frame and the same box evaluated inside the grid are bit-identical.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import CameraCalibration, PointOfInterest, RadarDetection

ALIGNMENTS = ('centered', 'left', 'right', 'bottom')

DEFAULT_SIZES = (32.0, 64.0, 128.0, 256.0)
DEFAULT_RATIOS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates."""
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"Empty or inverted box: {self.to_list()}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def translated(self, du: float, dv: float) -> "BoundingBox":
        return BoundingBox(self.x1 + du, self.y1 + dv, self.x2 + du, self.y2 + dv)

    def to_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BoundingBox":
        if len(values) != 4:
            raise ValueError(f"Box needs 4 coordinates, got {len(values)}")
        return cls(*(float(x) for x in values))


@dataclass(frozen=True)
class AnchorTemplate:
    """Unscaled anchor: size in pixels and which point sits on the POI."""
    width: float
    height: float
    alignment: str


@dataclass(frozen=True)
class AnchorConfig:
    """
    Anchor shapes generated at every POI.

    Attributes:
        sizes: Base sizes in pixels; each template has area size^2
        aspect_ratios: Width/height ratios
        alignments: Which anchor point coincides with the POI
    """
    sizes: Tuple[float, ...] = DEFAULT_SIZES
    aspect_ratios: Tuple[float, ...] = DEFAULT_RATIOS
    alignments: Tuple[str, ...] = ALIGNMENTS

    def __post_init__(self):
        object.__setattr__(self, 'sizes', tuple(float(s) for s in self.sizes))
        object.__setattr__(self, 'aspect_ratios', tuple(float(r) for r in self.aspect_ratios))
        object.__setattr__(self, 'alignments', tuple(self.alignments))

        if not self.sizes or any(not (s > 0 and math.isfinite(s)) for s in self.sizes):
            raise ValueError(f"Anchor sizes must be positive: {self.sizes}")
        if not self.aspect_ratios or any(not (r > 0 and math.isfinite(r)) for r in self.aspect_ratios):
            raise ValueError(f"Aspect ratios must be positive: {self.aspect_ratios}")
        if not self.alignments:
            raise ValueError("At least one alignment is required")
        unknown = set(self.alignments) - set(ALIGNMENTS)
        if unknown:
            raise ValueError(f"Unknown alignments {sorted(unknown)}; choose from {ALIGNMENTS}")
        if (len(set(self.sizes)) != len(self.sizes)
                or len(set(self.aspect_ratios)) != len(self.aspect_ratios)
                or len(set(self.alignments)) != len(self.alignments)):
            raise ValueError("Duplicate (size, ratio, alignment) anchor combinations")

    @property
    def num_templates(self) -> int:
        return len(self.sizes) * len(self.aspect_ratios) * len(self.alignments)

    def to_dict(self) -> dict:
        return {
            'sizes': list(self.sizes),
            'aspect_ratios': list(self.aspect_ratios),
            'alignments': list(self.alignments),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnchorConfig":
        if not isinstance(data, dict):
            raise ValueError("Anchor config must be a JSON object")
        unknown = set(data) - {'sizes', 'aspect_ratios', 'alignments'}
        if unknown:
            raise ValueError(f"Unknown anchor config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})


@dataclass(frozen=True)
class ScaleParams:
    """Parameters of the distance law S(d) = alpha / d + beta."""
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"Scale parameters must be finite: {self}")

    def is_positive_on(self, d_min: float, d_max: float) -> bool:
        """S is monotone in d, so checking both ends covers the range."""
        return self.alpha / d_min + self.beta > 0 and self.alpha / d_max + self.beta > 0

    def to_dict(self) -> dict:
        return {'alpha': self.alpha, 'beta': self.beta}

    @classmethod
    def from_dict(cls, data: dict) -> "ScaleParams":
        if not isinstance(data, dict):
            raise ValueError("Scale parameters must be a JSON object with alpha and beta")
        try:
            return cls(alpha=float(data['alpha']), beta=float(data['beta']))
        except TypeError as exc:
            raise ValueError(f"Scale parameters must be numbers: {exc}") from exc


@dataclass(frozen=True)
class ProposalConfig:
    """
    Post-processing applied to placed anchors.

    Attributes:
        max_proposals: Per-frame cap
        min_area: Minimum clipped area in px^2
        min_visible_frac: Minimum clipped/unclipped area ratio
        d_min: Distances below this are clamped before scaling
        d_max: Upper end of the operating range the scale law must cover
        margin_px: Off-image tolerance for projected POIs
        epsilon_w: Behind-camera threshold on the homogeneous scale
    """
    max_proposals: int = 2000
    min_area: float = 16.0
    min_visible_frac: float = 0.25
    d_min: float = 1.0
    d_max: float = 100.0
    margin_px: float = 0.0
    epsilon_w: float = 1e-6

    def __post_init__(self):
        if self.max_proposals < 0:
            raise ValueError("max_proposals must be >= 0")
        if self.min_area < 0:
            raise ValueError("min_area must be >= 0")
        if not 0.0 <= self.min_visible_frac <= 1.0:
            raise ValueError("min_visible_frac must lie in [0, 1]")
        if not 0 < self.d_min < self.d_max:
            raise ValueError(f"Need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if self.margin_px < 0:
            raise ValueError("margin_px must be >= 0")
        if self.epsilon_w < 0:
            raise ValueError("epsilon_w must be >= 0")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> "ProposalConfig":
        if not isinstance(data, dict):
            raise ValueError("Proposal config must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"Unknown proposal config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(eq=False)
class ProposalSet:
    """
    Proposals for one frame.

    Boxes are held as an (N, 4) float array of x1, y1, x2, y2; `boxes`
    materializes them as BoundingBox objects.
    """
    frame_id: int
    box_array: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    source_ids: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.box_array = np.asarray(self.box_array, dtype=float).reshape(-1, 4)
        self.source_ids = [int(s) for s in self.source_ids]
        if len(self.source_ids) != len(self.box_array):
            raise ValueError(
                f"Frame {self.frame_id}: {len(self.box_array)} boxes but "
                f"{len(self.source_ids)} source ids"
            )

    @property
    def boxes(self) -> List[BoundingBox]:
        return [BoundingBox(*row) for row in self.box_array.tolist()]

    def __len__(self) -> int:
        return len(self.source_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProposalSet):
            return NotImplemented
        return (self.frame_id == other.frame_id
                and self.source_ids == other.source_ids
                and np.array_equal(self.box_array, other.box_array))

    def to_dict(self) -> dict:
        return {
            'frame_id': self.frame_id,
            'boxes': self.box_array.tolist(),
            'source_ids': list(self.source_ids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProposalSet":
        return cls(
            frame_id=int(data['frame_id']),
            box_array=np.array(data['boxes'], dtype=float).reshape(-1, 4),
            source_ids=data['source_ids'],
        )


def anchor_templates(cfg: AnchorConfig) -> List[AnchorTemplate]:
    """
    All anchor shapes for a config, size-major, then ratio, then alignment.

    Width = size * sqrt(ratio) and height = size / sqrt(ratio), so every
    ratio keeps the area at size^2.
    """
    templates = []
    for size in cfg.sizes:
        for ratio in cfg.aspect_ratios:
            root = math.sqrt(ratio)
            for alignment in cfg.alignments:
                templates.append(AnchorTemplate(size * root, size / root, alignment))
    return templates


def _alignment_offsets(width: float, height: float, alignment: str) -> Tuple[float, float, float, float]:
    """Box corners relative to the POI at scale 1."""
    if alignment == 'centered':
        return (-width / 2, -height / 2, width / 2, height / 2)
    if alignment == 'left':
        return (0.0, -height / 2, width, height / 2)
    if alignment == 'right':
        return (-width, -height / 2, 0.0, height / 2)
    if alignment == 'bottom':
        return (-width / 2, -height, width / 2, 0.0)
    raise ValueError(f"Unknown alignment: {alignment}")


def template_offsets(templates: Sequence[AnchorTemplate]) -> np.ndarray:
    """(T, 4) corner offsets for a list of templates."""
    if not templates:
        return np.zeros((0, 4))
    return np.array([_alignment_offsets(t.width, t.height, t.alignment) for t in templates], dtype=float)


def scale_factor(d: float, params: ScaleParams, d_min: float = 1.0) -> float:
    """S(d) = alpha / d + beta with d clamped to at least d_min."""
    return params.alpha / max(d, d_min) + params.beta


def scale_factors(distances: np.ndarray, alpha: float, beta: float, d_min: float) -> np.ndarray:
    """Vectorized scale_factor."""
    return alpha / np.maximum(distances, d_min) + beta


def place_anchor(template: AnchorTemplate, poi: PointOfInterest, scale: float) -> BoundingBox:
    """
    Instantiate a template at a POI.

    Scaling happens about the alignment point, so a left-aligned anchor keeps
    its left edge on the POI at every scale.
    """
    if not scale > 0:
        raise ValueError(f"Scale must be positive, got {scale}")
    ox1, oy1, ox2, oy2 = _alignment_offsets(template.width, template.height, template.alignment)
    return BoundingBox(
        poi.u + scale * ox1,
        poi.v + scale * oy1,
        poi.u + scale * ox2,
        poi.v + scale * oy2,
    )


def place_anchors(
    u: np.ndarray,
    v: np.ndarray,
    scales: np.ndarray,
    offsets: np.ndarray
) -> np.ndarray:
    """
    Place every template at every point.

    Returns:
        (N * T, 4) boxes ordered point-major, template-minor
    """
    anchor = np.stack([u, v, u, v], axis=1)[:, None, :]
    boxes = anchor + scales[:, None, None] * offsets[None, :, :]
    return boxes.reshape(-1, 4)


def clip_boxes(
    boxes: np.ndarray,
    width: Union[float, np.ndarray],
    height: Union[float, np.ndarray],
    min_area: float,
    min_visible_frac: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Clip boxes to the image and flag the ones worth keeping.

    Args:
        boxes: (K, 4) unclipped boxes
        width, height: Image size, scalar or one entry per box

    Returns:
        (clipped boxes, keep mask)
    """
    clipped = np.empty_like(boxes)
    clipped[:, 0] = np.clip(boxes[:, 0], 0.0, width)
    clipped[:, 1] = np.clip(boxes[:, 1], 0.0, height)
    clipped[:, 2] = np.clip(boxes[:, 2], 0.0, width)
    clipped[:, 3] = np.clip(boxes[:, 3], 0.0, height)

    cw = clipped[:, 2] - clipped[:, 0]
    ch = clipped[:, 3] - clipped[:, 1]
    raw_area = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    clipped_area = np.maximum(cw, 0.0) * np.maximum(ch, 0.0)

    keep = (
        (cw > 0) & (ch > 0)
        & (clipped_area >= min_area)
        & (clipped_area >= min_visible_frac * raw_area)
    )
    return clipped, keep


def cap_mask(keep: np.ndarray, group: np.ndarray, max_proposals: int) -> np.ndarray:
    """
    Keep at most max_proposals flagged entries per group, first come first
    served. `group` must be sorted so each group's entries are contiguous.
    """
    kept = keep.astype(np.int64)
    before = np.cumsum(kept) - kept
    group_start = np.searchsorted(group, group, side='left')
    rank = before - before[group_start]
    return keep & (rank < max_proposals)


def propose(
    pois: Sequence[PointOfInterest],
    cfg: AnchorConfig,
    params: ScaleParams,
    calib: CameraCalibration,
    config: Optional[ProposalConfig] = None,
    frame_id: int = 0,
    offsets: Optional[np.ndarray] = None
) -> ProposalSet:
    """
    Generate the proposal set for one frame.

    Args:
        pois: Points of interest of the frame
        cfg: Anchor shapes
        params: Distance-compensation parameters
        calib: Camera (only the image size is used)
        config: Clipping and cap settings
        frame_id: Id stamped on the result
        offsets: Precomputed template_offsets(anchor_templates(cfg)), to skip
            rebuilding them on hot paths

    Returns:
        ProposalSet ordered by POI, then template
    """
    config = config or ProposalConfig()
    if not params.is_positive_on(config.d_min, config.d_max):
        raise ValueError(
            f"Scale law {params} is not positive on [{config.d_min}, {config.d_max}] m"
        )
    if not pois:
        return ProposalSet(frame_id=frame_id)

    if offsets is None:
        offsets = template_offsets(anchor_templates(cfg))
    n_templates = len(offsets)

    u = np.array([p.u for p in pois], dtype=float)
    v = np.array([p.v for p in pois], dtype=float)
    d = np.array([p.distance for p in pois], dtype=float)
    ids = np.array([p.source_id for p in pois], dtype=np.int64)

    scales = scale_factors(d, params.alpha, params.beta, config.d_min)
    boxes = place_anchors(u, v, scales, offsets)
    clipped, keep = clip_boxes(
        boxes, calib.image_width, calib.image_height,
        config.min_area, config.min_visible_frac
    )

    selected = np.flatnonzero(keep)[:config.max_proposals]
    return ProposalSet(
        frame_id=frame_id,
        box_array=clipped[selected],
        source_ids=np.repeat(ids, n_templates)[selected].tolist(),
    )


def proposal_kinematics(
    proposals: ProposalSet,
    detections: Iterable[RadarDetection]
) -> List[Tuple[float, float]]:
    """
    Radar range and range-rate for each proposal, looked up through the
    proposal's source id.
    """
    by_id: Dict[int, RadarDetection] = {d.id: d for d in detections}
    kinematics = []
    for source_id in proposals.source_ids:
        det = by_id.get(source_id)
        if det is None:
            raise KeyError(f"Frame {proposals.frame_id}: no detection with id {source_id}")
        kinematics.append((det.distance, det.range_rate))
    return kinematics


def save_proposals(
    sets: Iterable[ProposalSet],
    path: Union[str, Path],
    kinematics: Optional[Dict[int, List[Tuple[float, float]]]] = None
):
    """
    Write proposal sets as JSONL, one frame per line.

    Args:
        kinematics: Optional frame_id -> per-box (range, range_rate); adds
            `ranges` and `range_rates` arrays to each line
    """
    with open(path, 'w') as f:
        for pset in sets:
            record = pset.to_dict()
            if kinematics is not None:
                pairs = kinematics.get(pset.frame_id, [])
                record['ranges'] = [r for r, _ in pairs]
                record['range_rates'] = [rr for _, rr in pairs]
            f.write(json.dumps(record) + '\n')


def load_proposals(path: Union[str, Path]) -> List[ProposalSet]:
    """Read a proposal JSONL file. Blank lines are skipped."""
    sets = []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                sets.append(ProposalSet.from_dict(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad proposal record: {exc}") from exc
    return sets
