"""
Pipeline configuration file.

A JSON object with optional sections; missing sections keep their defaults:

    {
      "anchors":   {"sizes": [...], "aspect_ratios": [...], "alignments": [...]},
      "proposals": {"max_proposals": 2000, "min_area": 16, ...},
      "grid":      {"alpha_range": [0, 2000, 51], "beta_range": [0, 2, 41]},
      "eval":      {"iou_thresholds": [0.5, 0.75], "area_ranges": [[name, lo, hi], ...]}
    }
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..core.calibration import GridSpec
from ..core.evaluation import EvalConfig
from ..core.proposals import AnchorConfig, ProposalConfig

SECTIONS = ('anchors', 'proposals', 'grid', 'eval')


@dataclass(frozen=True)
class PipelineConfig:
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    proposals: ProposalConfig = field(default_factory=ProposalConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ValueError("Pipeline config must be a JSON object")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ValueError(f"Unknown config sections: {sorted(unknown)}")
        for name in SECTIONS:
            if not isinstance(data.get(name, {}), dict):
                raise ValueError(f"Config section '{name}' must be a JSON object")
        try:
            return cls(
                anchors=AnchorConfig.from_dict(data.get('anchors', {})),
                proposals=ProposalConfig.from_dict(data.get('proposals', {})),
                grid=GridSpec.from_dict(data.get('grid', {})),
                eval=EvalConfig.from_dict(data.get('eval', {})),
            )
        except (TypeError, AttributeError) as exc:
            raise ValueError(f"Malformed pipeline config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            'anchors': self.anchors.to_dict(),
            'proposals': self.proposals.to_dict(),
            'grid': self.grid.to_dict(),
            'eval': self.eval.to_dict(),
        }


def load_pipeline_config(path: Optional[Union[str, Path]]) -> PipelineConfig:
    """Read a pipeline config; None gives the defaults."""
    if path is None:
        return PipelineConfig()
    with open(path) as f:
        return PipelineConfig.from_dict(json.load(f))
