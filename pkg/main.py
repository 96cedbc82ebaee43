#!/usr/bin/env python3
"""
Radar Region Proposals - Main CLI

Runs the radar proposal pipeline end to end: synthetic data generation,
proposal generation, distance-law calibration, proposal evaluation,
throughput benchmarking and overlay rendering.

Every command prints a single-line JSON summary on stdout. Log messages go
to stderr and to the session log under --log-dir.

Exit codes: 0 success, 2 usage or invalid input, 1 internal error.
"""

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

# Add rrpn to path
sys.path.insert(0, str(Path(__file__).parent))

from rrpn.core import (
    CalibrationReport,
    GridSpec,
    ScaleParams,
    SynthConfig,
    evaluate,
    grid_search,
    load_dataset,
    objective,
    prepare_dataset,
    project_frame,
    propose,
    run_benchmark,
    save_dataset,
    split_frames,
    synthesize,
)
from rrpn.core.proposals import load_proposals, proposal_kinematics, save_proposals
from rrpn.utils.config import load_pipeline_config
from rrpn.utils.logger import ExperimentLogger
from rrpn.utils.raster import blank_image, read_ppm, render_overlay, write_ppm
from rrpn.utils.visualization import (
    plot_calibration_heatmap,
    plot_recall_vs_iou,
    plot_scale_law,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


def emit(summary: dict):
    """Print the one-line JSON summary of a command."""
    print(json.dumps(summary))


def resolve_params(args) -> ScaleParams:
    """Distance-law parameters from --params or --alpha/--beta."""
    if args.params:
        return CalibrationReport.load_json(args.params).best
    if args.alpha is None or args.beta is None:
        raise ValueError("Give --alpha and --beta, or --params <calibration.json>")
    return ScaleParams(args.alpha, args.beta)


def cmd_synth(args, config, logger) -> int:
    """Generate a synthetic dataset."""
    with open(args.synth_config) as f:
        synth = SynthConfig.from_dict(json.load(f))
    if args.seed is not None:
        synth = replace(synth, seed=args.seed)

    frames, calib = synthesize(synth, min_area=config.proposals.min_area)
    save_dataset(frames, {synth.calib_ref: calib}, args.out)

    summary = {
        'command': 'synth',
        'frames': len(frames),
        'detections': sum(len(f.detections) for f in frames),
        'gt_boxes': sum(len(f.gt_boxes) for f in frames),
        'seed': synth.seed,
        'out': str(args.out),
    }
    logger.log(f"Synthesized {len(frames)} frames into {args.out}")
    logger.record_experiment('synth', synth.to_dict(), summary)
    emit(summary)
    return EXIT_OK


def cmd_propose(args, config, logger) -> int:
    """Generate proposals for every frame of a dataset."""
    frames, calibs = load_dataset(args.dataset)
    params = resolve_params(args)

    sets, kinematics = [], {}
    for frame in frames:
        calib = calibs[frame.calib_ref]
        pois = project_frame(frame.detections, calib, config.proposals.margin_px, config.proposals.epsilon_w)
        pset = propose(pois, config.anchors, params, calib, config.proposals, frame.frame_id)
        sets.append(pset)
        if args.with_kinematics:
            kinematics[frame.frame_id] = proposal_kinematics(pset, frame.detections)

    save_proposals(sets, args.out, kinematics if args.with_kinematics else None)

    summary = {
        'command': 'propose',
        'frames': len(sets),
        'proposals': sum(len(s) for s in sets),
        'alpha': params.alpha,
        'beta': params.beta,
        'out': str(args.out),
    }
    logger.log(f"Wrote {summary['proposals']} proposals for {len(sets)} frames to {args.out}")
    logger.record_experiment('propose', vars_of(args), summary)
    emit(summary)
    return EXIT_OK


def cmd_calibrate(args, config, logger) -> int:
    """Grid-search the distance-law parameters."""
    frames, calibs = load_dataset(args.dataset)

    grid = config.grid
    if args.alpha_range or args.beta_range:
        grid = GridSpec(
            alpha_range=tuple(args.alpha_range) if args.alpha_range else grid.alpha_range,
            beta_range=tuple(args.beta_range) if args.beta_range else grid.beta_range,
        )

    train, test = frames, []
    if args.train_fraction < 1.0:
        train, test = split_frames(frames, args.train_fraction, seed=args.seed or 0)

    samples = prepare_dataset(train, calibs, config.proposals)
    report = grid_search(
        samples, grid, config.anchors, calibs, config.proposals,
        threads=args.threads, exclude_empty=args.exclude_empty, refine=args.refine,
    )
    report.save_json(args.out)

    summary = {
        'command': 'calibrate',
        'alpha': report.best.alpha,
        'beta': report.best.beta,
        'objective': report.objective,
        'frames_used': report.frames_used,
        'total_gt': report.total_gt,
        'out': str(args.out),
    }
    if test:
        held_out = prepare_dataset(test, calibs, config.proposals)
        held_out_objective = objective(held_out, report.best, config.anchors, calibs, config.proposals)
        held_out_gt = sum(len(f.gt_boxes) for f in test)
        summary['holdout_frames'] = len(test)
        summary['holdout_objective'] = held_out_objective
        summary['holdout_mean_best_iou'] = held_out_objective / held_out_gt if held_out_gt else 0.0

    logger.log(str(report).strip())
    logger.record_experiment('calibrate', {'grid': grid.to_dict(), **vars_of(args)}, summary)
    emit(summary)
    return EXIT_OK


def cmd_eval(args, config, logger) -> int:
    """Score proposals against a dataset's ground truth."""
    frames, _ = load_dataset(args.dataset)
    proposals = load_proposals(args.proposals)
    report = evaluate(proposals, frames, config.eval)

    if args.json_out:
        report.save_json(args.json_out)
    if args.csv_out:
        report.save_csv(args.csv_out)
    if args.plot:
        plot_recall_vs_iou(proposals, frames, output_file=args.plot)

    summary = {'command': 'eval', **report.to_dict()}
    logger.log(str(report).strip())
    logger.record_experiment('eval', vars_of(args), report.to_dict())
    emit(summary)
    return EXIT_OK


def cmd_bench(args, config, logger) -> int:
    """Time projection + proposal generation."""
    frames, calibs = load_dataset(args.dataset)
    params = resolve_params(args)

    report = run_benchmark(
        frames, calibs, config.anchors, params, config.proposals,
        repetitions=args.repetitions, threads=args.threads,
    )
    if args.out:
        with open(args.out, 'w') as f:
            json.dump(report.to_dict(), f, indent=2)

    logger.log(str(report).strip())
    logger.record_experiment('bench', vars_of(args), report.to_dict())
    emit({'command': 'bench', **report.to_dict()})
    return EXIT_OK


def cmd_render(args, config, logger) -> int:
    """Draw one frame's ground truth and proposals."""
    frames, calibs = load_dataset(args.dataset)
    frame = next((f for f in frames if f.frame_id == args.frame_id), None)
    if frame is None:
        raise ValueError(f"Frame {args.frame_id} not found in {args.dataset}")

    pset = next((p for p in load_proposals(args.proposals) if p.frame_id == args.frame_id), None)
    proposal_boxes = pset.box_array.tolist() if pset is not None else []

    calib = calibs[frame.calib_ref]
    if args.background:
        background = read_ppm(args.background)
    else:
        background = blank_image(calib.image_width, calib.image_height)

    image = render_overlay(background, [b.to_list() for b in frame.gt_boxes], proposal_boxes)
    write_ppm(image, args.out)

    summary = {
        'command': 'render',
        'frame_id': frame.frame_id,
        'gt_boxes': len(frame.gt_boxes),
        'proposals': len(proposal_boxes),
        'out': str(args.out),
    }
    logger.log(f"Rendered frame {frame.frame_id} to {args.out}")
    logger.record_experiment('render', vars_of(args), summary)
    emit(summary)
    return EXIT_OK


def cmd_heatmap(args, config, logger) -> int:
    """Plot a calibration report."""
    report = CalibrationReport.load_json(args.report)
    plot_calibration_heatmap(report, output_file=args.out)
    if args.scale_law:
        plot_scale_law(
            report.best,
            (config.proposals.d_min, config.proposals.d_max),
            config.proposals.d_min,
            output_file=args.scale_law,
        )

    summary = {'command': 'heatmap', 'out': str(args.out)}
    logger.log(f"Saved calibration heatmap to {args.out}")
    logger.record_experiment('heatmap', vars_of(args), summary)
    emit(summary)
    return EXIT_OK


def vars_of(args) -> dict:
    """argparse namespace as a JSON-friendly dict."""
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != 'func'}


def add_params_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--alpha', type=float, default=None, help='Distance-law alpha (pixel*m)')
    parser.add_argument('--beta', type=float, default=None, help='Distance-law beta')
    parser.add_argument('--params', type=Path, default=None,
                        help='Take alpha/beta from a calibration report JSON')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Radar Region Proposals",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s synth synth.json scene.jsonl
  %(prog)s propose scene.jsonl proposals.jsonl --alpha 8 --beta 0.4
  %(prog)s calibrate scene.jsonl calibration.json
  %(prog)s eval proposals.jsonl scene.jsonl --csv-out recall.csv
  %(prog)s bench scene.jsonl --params calibration.json
  %(prog)s render scene.jsonl proposals.jsonl --frame-id 0 frame0.ppm
        """
    )
    parser.add_argument('--config', type=Path, default=None,
                        help='Pipeline config JSON (anchors, proposals, grid, eval)')
    parser.add_argument('--seed', type=int, default=None, help='Seed override')
    parser.add_argument('--threads', type=int, default=1,
                        help='Worker threads for bench and calibrate (default: 1)')
    parser.add_argument('--log-dir', default='results/logs', help='Session log directory')

    subparsers = parser.add_subparsers(dest='command', help='Command to run')

    parser_synth = subparsers.add_parser('synth', help='Generate a synthetic dataset')
    parser_synth.add_argument('synth_config', type=Path, help='Synthesis config JSON')
    parser_synth.add_argument('out', type=Path, help='Output dataset JSONL')
    parser_synth.set_defaults(func=cmd_synth)

    parser_propose = subparsers.add_parser('propose', help='Generate proposals')
    parser_propose.add_argument('dataset', type=Path)
    parser_propose.add_argument('out', type=Path, help='Output proposal JSONL')
    add_params_arguments(parser_propose)
    parser_propose.add_argument('--with-kinematics', action='store_true',
                                help='Add radar range and range-rate per proposal')
    parser_propose.set_defaults(func=cmd_propose)

    parser_cal = subparsers.add_parser('calibrate', help='Grid-search alpha and beta')
    parser_cal.add_argument('dataset', type=Path)
    parser_cal.add_argument('out', type=Path, help='Output calibration report JSON')
    parser_cal.add_argument('--alpha-range', type=float, nargs=3, metavar=('LO', 'HI', 'STEPS'))
    parser_cal.add_argument('--beta-range', type=float, nargs=3, metavar=('LO', 'HI', 'STEPS'))
    parser_cal.add_argument('--exclude-empty', action='store_true',
                            help='Ignore frames without points of interest')
    parser_cal.add_argument('--refine', action='store_true',
                            help='Zoom once around the coarse optimum')
    parser_cal.add_argument('--train-fraction', type=float, default=1.0,
                            help='Calibrate on this fraction, report the rest as held out')
    parser_cal.set_defaults(func=cmd_calibrate)

    parser_eval = subparsers.add_parser('eval', help='Evaluate proposals')
    parser_eval.add_argument('proposals', type=Path)
    parser_eval.add_argument('dataset', type=Path)
    parser_eval.add_argument('--json-out', type=Path, default=None)
    parser_eval.add_argument('--csv-out', type=Path, default=None)
    parser_eval.add_argument('--plot', type=Path, default=None, help='Recall-vs-IOU plot (PNG)')
    parser_eval.set_defaults(func=cmd_eval)

    parser_bench = subparsers.add_parser('bench', help='Benchmark throughput')
    parser_bench.add_argument('dataset', type=Path)
    add_params_arguments(parser_bench)
    parser_bench.add_argument('--repetitions', type=int, default=5,
                              help='Timed passes; best is reported (default: 5)')
    parser_bench.add_argument('--out', type=Path, default=None, help='BenchReport JSON')
    parser_bench.set_defaults(func=cmd_bench)

    parser_render = subparsers.add_parser('render', help='Render a frame overlay (PPM)')
    parser_render.add_argument('dataset', type=Path)
    parser_render.add_argument('proposals', type=Path)
    parser_render.add_argument('--frame-id', type=int, required=True)
    parser_render.add_argument('out', type=Path, help='Output PPM image')
    parser_render.add_argument('--background', type=Path, default=None, help='Background PPM')
    parser_render.set_defaults(func=cmd_render)

    parser_heat = subparsers.add_parser('heatmap', help='Plot a calibration report')
    parser_heat.add_argument('report', type=Path)
    parser_heat.add_argument('out', type=Path, help='Output PNG')
    parser_heat.add_argument('--scale-law', type=Path, default=None, help='Also plot S(d) (PNG)')
    parser_heat.set_defaults(func=cmd_heatmap)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.threads < 1:
        print("Error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = load_pipeline_config(args.config)
        logger = ExperimentLogger(args.log_dir)
        return args.func(args, config, logger)
    except (ValueError, KeyError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"\nError: {e}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n\nInterrupted by user. Exiting...", file=sys.stderr)
        sys.exit(EXIT_INTERNAL)
