"""
Throughput Benchmark

Times the per-frame pipeline (projection + proposal generation) over a
loaded dataset. Parsing and I/O happen before the clock starts. The best of
several repetitions is reported to damp scheduler noise; the median is kept
alongside it.
"""

import os
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import Frame
from .geometry import CameraCalibration, project_frame
from .proposals import (
    AnchorConfig,
    ProposalConfig,
    ScaleParams,
    anchor_templates,
    propose,
    template_offsets,
)


@dataclass
class BenchReport:
    """Timing summary; frames_per_second = frames_processed / wall_seconds."""
    frames_processed: int
    wall_seconds: float
    frames_per_second: float
    pois_per_frame_mean: float
    proposals_per_frame_mean: float
    median_seconds: float
    repetitions: int
    mode: str
    threads: int
    cpu: str
    cpu_count: int

    def __str__(self) -> str:
        return f"""
Benchmark Results
{'=' * 60}
Mode: {self.mode} ({self.threads} thread(s))
Host: {self.cpu} ({self.cpu_count} CPUs)
Frames: {self.frames_processed:,}
Best wall time: {self.wall_seconds:.4f} seconds ({self.repetitions} repetitions)
Median wall time: {self.median_seconds:.4f} seconds
Throughput: {self.frames_per_second:,.1f} frames/s
POIs per frame: {self.pois_per_frame_mean:.1f}
Proposals per frame: {self.proposals_per_frame_mean:.1f}
"""

    def to_dict(self) -> dict:
        return asdict(self)


def host_cpu() -> str:
    """Best-effort CPU description."""
    name = platform.processor()
    if not name and os.path.exists('/proc/cpuinfo'):
        with open('/proc/cpuinfo') as f:
            for line in f:
                if line.startswith('model name'):
                    name = line.split(':', 1)[1].strip()
                    break
    return name or platform.machine() or 'unknown'


def run_benchmark(
    frames: Sequence[Frame],
    calibs: Dict[str, CameraCalibration],
    cfg: AnchorConfig,
    params: ScaleParams,
    config: Optional[ProposalConfig] = None,
    repetitions: int = 5,
    threads: int = 1
) -> BenchReport:
    """
    Time projection + proposal generation over every frame.

    Args:
        frames: Loaded frames
        calibs: calib_ref -> calibration
        cfg: Anchor shapes
        params: Distance-law parameters
        config: Clipping and cap settings
        repetitions: Timed passes over the dataset; the fastest is reported
        threads: 1 for single-threaded, more for frame-parallel passes

    Returns:
        BenchReport
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if threads < 1:
        raise ValueError("threads must be >= 1")

    config = config or ProposalConfig()
    offsets = template_offsets(anchor_templates(cfg))
    jobs = [(f, calibs[f.calib_ref]) for f in frames]

    def run_frame(job) -> Tuple[int, int]:
        frame, calib = job
        pois = project_frame(frame.detections, calib, config.margin_px, config.epsilon_w)
        pset = propose(pois, cfg, params, calib, config, frame.frame_id, offsets)
        return len(pois), len(pset)

    timings: List[float] = []
    counts: List[Tuple[int, int]] = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _ in range(repetitions):
            start = time.perf_counter()
            if pool is not None:
                counts = list(pool.map(run_frame, jobs))
            else:
                counts = [run_frame(job) for job in jobs]
            timings.append(time.perf_counter() - start)
    finally:
        if pool is not None:
            pool.shutdown()

    best = max(min(timings), 1e-9)
    n = len(jobs)
    return BenchReport(
        frames_processed=n,
        wall_seconds=best,
        frames_per_second=n / best,
        pois_per_frame_mean=float(np.mean([c[0] for c in counts])) if counts else 0.0,
        proposals_per_frame_mean=float(np.mean([c[1] for c in counts])) if counts else 0.0,
        median_seconds=statistics.median(timings),
        repetitions=repetitions,
        mode='frame-parallel' if threads > 1 else 'single',
        threads=threads,
        cpu=host_cpu(),
        cpu_count=os.cpu_count() or 1,
    )
