"""
Plots for calibration and evaluation results.
"""

from typing import Sequence, Tuple

import matplotlib
matplotlib.use('Agg')  # Non-interactive backend for server environments
import matplotlib.pyplot as plt
import numpy as np

from ..core.calibration import CalibrationReport
from ..core.dataset import Frame
from ..core.evaluation import EvalConfig, evaluate
from ..core.proposals import ProposalSet, ScaleParams, scale_factors


def plot_calibration_heatmap(
    report: CalibrationReport,
    output_file: str = "results/graphs/calibration_heatmap.png"
):
    """
    Heatmap of the grid-search objective over (alpha, beta).

    Infeasible grid points (NaN) are left blank. The optimum is marked.
    """
    grid = np.ma.masked_invalid(report.grid_objectives)
    alphas, betas = report.alpha_values, report.beta_values

    fig, ax = plt.subplots(figsize=(10, 7))
    extent = [
        betas[0], betas[-1] if len(betas) > 1 else betas[0] + 1,
        alphas[0], alphas[-1] if len(alphas) > 1 else alphas[0] + 1,
    ]
    image = ax.imshow(grid, origin='lower', aspect='auto', extent=extent, cmap='viridis')
    fig.colorbar(image, ax=ax, label='Summed best IOU')

    ax.plot(report.best.beta, report.best.alpha, 'r*', markersize=14,
            label=f'best: α={report.best.alpha:g}, β={report.best.beta:g}')
    ax.set_xlabel('β', fontsize=12)
    ax.set_ylabel('α (pixel·m)', fontsize=12)
    ax.set_title(f'Calibration Objective ({report.frames_used} frames)', fontsize=14)
    ax.legend(loc='upper right')

    plt.tight_layout()
    plt.savefig(output_file, dpi=150, bbox_inches='tight')
    plt.close(fig)


def plot_scale_law(
    params: ScaleParams,
    distance_range: Tuple[float, float] = (1.0, 100.0),
    d_min: float = 1.0,
    output_file: str = "results/graphs/scale_law.png"
):
    """Plot S(d) = alpha / d + beta over a distance range."""
    d = np.linspace(distance_range[0], distance_range[1], 200)
    s = scale_factors(d, params.alpha, params.beta, d_min)

    plt.figure(figsize=(10, 6))
    plt.plot(d, s, 'b-', linewidth=2)
    plt.xlabel('Distance (m)', fontsize=12)
    plt.ylabel('Anchor scale factor', fontsize=12)
    plt.title(f'Distance Compensation: S(d) = {params.alpha:g}/d + {params.beta:g}', fontsize=14)
    plt.grid(True, alpha=0.3)

    plt.tight_layout()
    plt.savefig(output_file, dpi=150, bbox_inches='tight')
    plt.close()


def plot_recall_vs_iou(
    proposals: Sequence[ProposalSet],
    frames: Sequence[Frame],
    output_file: str = "results/graphs/recall_vs_iou.png",
    thresholds: Sequence[float] = tuple(np.round(np.arange(0.05, 1.0001, 0.05), 2))
):
    """Recall of ground-truth boxes as the IOU threshold rises."""
    report = evaluate(proposals, frames, EvalConfig(iou_thresholds=tuple(thresholds)))
    recalls = [report.recall_at[t] for t in report.recall_at]

    plt.figure(figsize=(10, 6))
    plt.plot(list(report.recall_at), recalls, 'bo-', linewidth=2, markersize=5)
    plt.axvline(x=0.5, color='r', linestyle='--', alpha=0.7, label='IOU 0.5')
    plt.axvline(x=0.75, color='g', linestyle='--', alpha=0.7, label='IOU 0.75')

    plt.xlabel('IOU threshold', fontsize=12)
    plt.ylabel('Recall', fontsize=12)
    plt.title(f'Proposal Recall ({report.frames} frames, {report.total_gt} boxes)', fontsize=14)
    plt.ylim(0, 1.05)
    plt.grid(True, alpha=0.3)
    plt.legend()

    plt.gca().yaxis.set_major_formatter(plt.FuncFormatter(lambda y, _: f'{y:.0%}'))

    plt.tight_layout()
    plt.savefig(output_file, dpi=150, bbox_inches='tight')
    plt.close()
