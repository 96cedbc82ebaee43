"""
Proposal Quality Evaluation

Measures how well proposals cover ground truth: per-box best IOU, recall at
IOU thresholds, COCO-style area stratification (small / medium / large) and
average recall over IOU 0.50:0.05:0.95.

A ground-truth box counts as recalled at threshold t when any proposal in its
frame reaches IOU >= t. There is no one-to-one matching; proposals carry no
score to rank by.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .dataset import Frame
from .proposals import BoundingBox, ProposalSet

COCO_AR_THRESHOLDS = tuple(np.round(np.linspace(0.5, 0.95, 10), 2).tolist())

DEFAULT_AREA_RANGES = (
    ('small', 0.0, 32.0 ** 2),
    ('medium', 32.0 ** 2, 96.0 ** 2),
    ('large', 96.0 ** 2, math.inf),
)


class FrameMismatchError(ValueError):
    """Proposal and ground-truth frame ids do not line up."""


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a.x2 - a.x1) * (a.y2 - a.y1)
    area_b = (b.x2 - b.x1) * (b.y2 - b.y1)
    return inter / (area_a + area_b - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Pairwise IOU between two box arrays.

    Args:
        a: (M, 4) boxes
        b: (K, 4) boxes

    Returns:
        (M, K) IOU values
    """
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def paired_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise IOU of two (P, 4) box arrays."""
    iw = np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0])
    ih = np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1])
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a + area_b - inter)


def best_ious(gt: np.ndarray, proposals: np.ndarray) -> np.ndarray:
    """Max IOU of each ground-truth box over all proposals (0 if none)."""
    gt = np.asarray(gt, dtype=float).reshape(-1, 4)
    if len(gt) == 0:
        return np.zeros(0)
    if len(proposals) == 0:
        return np.zeros(len(gt))
    return iou_matrix(gt, proposals).max(axis=1)


@dataclass(frozen=True)
class EvalConfig:
    """
    Attributes:
        iou_thresholds: Strictly increasing thresholds in (0, 1]
        area_ranges: (name, lo, hi) pixel^2 intervals, contiguous from 0 to inf
    """
    iou_thresholds: Tuple[float, ...] = (0.5, 0.75)
    area_ranges: Tuple[Tuple[str, float, float], ...] = DEFAULT_AREA_RANGES

    def __post_init__(self):
        thresholds = tuple(float(t) for t in self.iou_thresholds)
        ranges = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.area_ranges)
        object.__setattr__(self, 'iou_thresholds', thresholds)
        object.__setattr__(self, 'area_ranges', ranges)

        if not thresholds:
            raise ValueError("At least one IOU threshold is required")
        if any(not 0 < t <= 1 for t in thresholds):
            raise ValueError(f"IOU thresholds must lie in (0, 1]: {thresholds}")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError(f"IOU thresholds must be strictly increasing: {thresholds}")

        if not ranges:
            raise ValueError("At least one area range is required")
        if ranges[0][1] != 0.0 or ranges[-1][2] != math.inf:
            raise ValueError("Area ranges must start at 0 and end at infinity")
        for _, lo, hi in ranges:
            if not lo < hi:
                raise ValueError(f"Empty area range [{lo}, {hi})")
        for (_, _, hi), (_, next_lo, _) in zip(ranges, ranges[1:]):
            if next_lo != hi:
                raise ValueError("Area ranges must be contiguous and disjoint")
        if len({n for n, _, _ in ranges}) != len(ranges):
            raise ValueError("Area range names must be unique")

    def area_class(self, area: float) -> str:
        for name, lo, hi in self.area_ranges:
            if lo <= area < hi:
                return name
        return self.area_ranges[-1][0]

    def to_dict(self) -> dict:
        return {
            'iou_thresholds': list(self.iou_thresholds),
            'area_ranges': [[n, lo, None if math.isinf(hi) else hi] for n, lo, hi in self.area_ranges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        if not isinstance(data, dict):
            raise ValueError("Eval config must be a JSON object")
        unknown = set(data) - {'iou_thresholds', 'area_ranges'}
        if unknown:
            raise ValueError(f"Unknown eval config keys: {sorted(unknown)}")
        kwargs = {}
        if 'iou_thresholds' in data:
            kwargs['iou_thresholds'] = tuple(data['iou_thresholds'])
        if 'area_ranges' in data:
            kwargs['area_ranges'] = tuple(
                (n, lo, math.inf if hi is None else hi) for n, lo, hi in data['area_ranges']
            )
        return cls(**kwargs)


@dataclass
class EvalReport:
    """Proposal-stage recall figures."""
    recall_at: Dict[float, float]
    mean_best_iou: float
    recall_by_area: Dict[Tuple[float, str], float]
    counts: Dict[str, int]
    frames: int
    average_recall: float = 0.0
    average_recall_by_area: Dict[str, float] = field(default_factory=dict)
    recall_by_class: Dict[Tuple[float, str], float] = field(default_factory=dict)
    class_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def total_gt(self) -> int:
        return sum(self.counts.values())

    def __str__(self) -> str:
        lines = [
            "",
            "Proposal Evaluation",
            "=" * 60,
            f"Frames: {self.frames}",
            f"Ground-truth boxes: {self.total_gt}",
            f"Mean best IOU: {self.mean_best_iou:.4f}",
            f"Average recall (IOU 0.50:0.95): {self.average_recall:.4f}",
            "",
        ]
        for t, r in self.recall_at.items():
            lines.append(f"Recall@{t:g}: {r:.2%}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            'frames': self.frames,
            'mean_best_iou': self.mean_best_iou,
            'average_recall': self.average_recall,
            'recall_at': {f"{t:g}": r for t, r in self.recall_at.items()},
            'recall_by_area': {f"{t:g}/{a}": r for (t, a), r in self.recall_by_area.items()},
            'average_recall_by_area': dict(self.average_recall_by_area),
            'recall_by_class': {f"{t:g}/{c}": r for (t, c), r in self.recall_by_class.items()},
            'counts': dict(self.counts),
            'class_counts': dict(self.class_counts),
        }

    def csv_rows(self) -> List[dict]:
        """One row per (threshold, area class), plus an 'all' row per threshold."""
        rows = []
        for t, r in self.recall_at.items():
            rows.append({'threshold': t, 'area': 'all', 'recall': r, 'gt_count': self.total_gt})
            for area, count in self.counts.items():
                rows.append({
                    'threshold': t,
                    'area': area,
                    'recall': self.recall_by_area[(t, area)],
                    'gt_count': count,
                })
        return rows

    def save_json(self, path: Union[str, Path]):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)

    def save_csv(self, path: Union[str, Path]):
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=['threshold', 'area', 'recall', 'gt_count'])
            writer.writeheader()
            writer.writerows(self.csv_rows())


def _fraction(hits: int, total: int) -> float:
    return hits / total if total else 0.0


def evaluate(
    proposals: Sequence[ProposalSet],
    gt: Sequence[Frame],
    cfg: EvalConfig = EvalConfig()
) -> EvalReport:
    """
    Score proposal sets against ground-truth frames.

    Raises:
        FrameMismatchError: if the two sides do not cover the same frame ids
    """
    by_frame = {p.frame_id: p for p in proposals}
    if len(by_frame) != len(proposals):
        raise FrameMismatchError("Duplicate frame ids among proposal sets")
    gt_ids = [f.frame_id for f in gt]
    if set(gt_ids) != set(by_frame):
        missing = sorted(set(gt_ids) - set(by_frame))
        extra = sorted(set(by_frame) - set(gt_ids))
        raise FrameMismatchError(
            f"Proposal frames do not match ground truth (missing {missing[:5]}, extra {extra[:5]})"
        )

    best_parts, area_parts, class_parts = [], [], []
    for frame in gt:
        gt_array = np.array([b.to_list() for b in frame.gt_boxes], dtype=float).reshape(-1, 4)
        best_parts.append(best_ious(gt_array, by_frame[frame.frame_id].box_array))
        area_parts.extend(cfg.area_class(b.area) for b in frame.gt_boxes)
        class_parts.extend(frame.gt_classes)

    best = np.concatenate(best_parts) if best_parts else np.zeros(0)
    areas = np.array(area_parts, dtype=object)
    classes = np.array(class_parts, dtype=object)
    total = len(best)

    counts = {name: int(np.sum(areas == name)) for name, _, _ in cfg.area_ranges}
    class_counts = {c: int(np.sum(classes == c)) for c in sorted(set(class_parts))}

    recall_at = {t: _fraction(int(np.sum(best >= t)), total) for t in cfg.iou_thresholds}
    recall_by_area = {
        (t, name): _fraction(int(np.sum((best >= t) & (areas == name))), counts[name])
        for t in cfg.iou_thresholds for name in counts
    }
    recall_by_class = {
        (t, c): _fraction(int(np.sum((best >= t) & (classes == c))), class_counts[c])
        for t in cfg.iou_thresholds for c in class_counts
    }

    ar_thresholds = np.array(COCO_AR_THRESHOLDS)
    average_recall = float(np.mean([_fraction(int(np.sum(best >= t)), total) for t in ar_thresholds]))
    average_recall_by_area = {
        name: float(np.mean([
            _fraction(int(np.sum((best >= t) & (areas == name))), counts[name]) for t in ar_thresholds
        ]))
        for name in counts
    }

    return EvalReport(
        recall_at=recall_at,
        mean_best_iou=float(best.mean()) if total else 0.0,
        recall_by_area=recall_by_area,
        counts=counts,
        frames=len(gt),
        average_recall=average_recall,
        average_recall_by_area=average_recall_by_area,
        recall_by_class=recall_by_class,
        class_counts=class_counts,
    )
