import json

import numpy as np
import pytest

from main import EXIT_OK, EXIT_USAGE, main
from rrpn.core.dataset import Frame, load_dataset, save_dataset
from rrpn.core.geometry import pinhole_calibration
from rrpn.core.proposals import BoundingBox, ProposalSet, load_proposals, save_proposals
from rrpn.utils.raster import GT_COLOR, PROPOSAL_COLOR, read_ppm

GRID_ARGS = ['--alpha-range', '0', '16', '5', '--beta-range', '0', '0.8', '5']


@pytest.fixture
def run(tmp_path, capsys):
    """Call main() and return (exit code, parsed stdout summary or None)."""
    def _run(*args):
        code = main(['--log-dir', str(tmp_path / 'logs'), *map(str, args)])
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) <= 1
        return code, json.loads(out[0]) if out else None
    return _run


@pytest.fixture
def scene(tmp_path, run):
    config = tmp_path / 'synth.json'
    config.write_text(json.dumps({
        'n_frames': 12,
        'pois_per_frame': [1, 5],
        'true_params': {'alpha': 8.0, 'beta': 0.4},
        'seed': 5,
    }))
    path = tmp_path / 'scene.jsonl'
    code, summary = run('synth', config, path)
    assert code == EXIT_OK
    return path, summary


@pytest.fixture
def empty_scene(tmp_path):
    path = tmp_path / 'empty.jsonl'
    path.write_text('')
    return path


class TestSynth:

    def test_writes_dataset_and_sidecar(self, scene, tmp_path):
        path, summary = scene
        assert summary['command'] == 'synth'
        assert summary['frames'] == 12
        assert len(path.read_text().splitlines()) == 12
        assert (tmp_path / 'scene.calib.json').exists()
        assert list((tmp_path / 'logs').glob('rrpn_*.json'))

    def test_seed_override(self, tmp_path, run):
        config = tmp_path / 'synth.json'
        config.write_text(json.dumps({'n_frames': 3, 'seed': 1}))
        run('--seed', 9, 'synth', config, tmp_path / 'a.jsonl')
        run('--seed', 9, 'synth', config, tmp_path / 'b.jsonl')
        code, summary = run('synth', config, tmp_path / 'c.jsonl')
        assert code == EXIT_OK and summary['seed'] == 1
        assert (tmp_path / 'a.jsonl').read_bytes() == (tmp_path / 'b.jsonl').read_bytes()

    def test_invalid_config(self, tmp_path, run):
        config = tmp_path / 'synth.json'
        config.write_text(json.dumps({'pois_per_frame': [4, 1]}))
        assert run('synth', config, tmp_path / 'out.jsonl') == (EXIT_USAGE, None)
        assert run('synth', tmp_path / 'missing.json', tmp_path / 'out.jsonl') == (EXIT_USAGE, None)

    @pytest.mark.parametrize('content', [
        {'noise': 5},
        {'n_frames': None},
        {'pois_per_frame': 5},
        {'anchors': 5},
        {'anchors': {'sizes': 5}},
        {'true_params': {'alpha': None, 'beta': 0.4}},
        [1, 2],
    ])
    def test_wrongly_typed_config(self, tmp_path, run, content):
        config = tmp_path / 'synth.json'
        config.write_text(json.dumps(content))
        assert run('synth', config, tmp_path / 'out.jsonl') == (EXIT_USAGE, None)


class TestPropose:

    def test_counts_follow_cap(self, scene, tmp_path, run):
        path, _ = scene
        out = tmp_path / 'proposals.jsonl'
        code, summary = run('propose', path, out, '--alpha', 8, '--beta', 0.4)
        assert code == EXIT_OK

        frames, _ = load_dataset(path)
        sets = load_proposals(out)
        assert len(sets) == len(frames) == summary['frames']
        for frame, pset in zip(frames, sets):
            assert pset.frame_id == frame.frame_id
            assert 0 < len(pset) <= min(48 * len(frame.detections), 2000)

    def test_empty_dataset(self, empty_scene, tmp_path, run):
        out = tmp_path / 'proposals.jsonl'
        code, summary = run('propose', empty_scene, out, '--alpha', 8, '--beta', 0.4)
        assert code == EXIT_OK
        assert summary['proposals'] == 0
        assert out.read_text() == ''

    def test_kinematics_columns(self, scene, tmp_path, run):
        path, _ = scene
        out = tmp_path / 'proposals.jsonl'
        run('propose', path, out, '--alpha', 8, '--beta', 0.4, '--with-kinematics')
        record = json.loads(out.read_text().splitlines()[0])
        assert len(record['ranges']) == len(record['boxes']) == len(record['range_rates'])

    def test_parameters_required(self, scene, tmp_path, run):
        path, _ = scene
        assert run('propose', path, tmp_path / 'p.jsonl') == (EXIT_USAGE, None)

    def test_non_positive_scale_law(self, scene, tmp_path, run):
        path, _ = scene
        assert run('propose', path, tmp_path / 'p.jsonl', '--alpha', 0, '--beta', 0) == (EXIT_USAGE, None)


class TestCalibrate:

    def test_recovers_parameters(self, scene, tmp_path, run):
        path, _ = scene
        report = tmp_path / 'calibration.json'
        code, summary = run('calibrate', path, report, *GRID_ARGS)
        assert code == EXIT_OK
        assert (summary['alpha'], summary['beta']) == (8.0, 0.4)
        assert summary['objective'] == pytest.approx(summary['total_gt'])

        # the report feeds straight into propose
        code, summary = run('propose', path, tmp_path / 'p.jsonl', '--params', report)
        assert code == EXIT_OK
        assert (summary['alpha'], summary['beta']) == (8.0, 0.4)

    def test_single_point_grid(self, scene, tmp_path, run):
        path, _ = scene
        code, summary = run('calibrate', path, tmp_path / 'c.json',
                            '--alpha-range', 8, 8, 1, '--beta-range', 0.4, 0.4, 1)
        assert code == EXIT_OK
        assert summary['alpha'] == 8.0

    def test_held_out_split(self, scene, tmp_path, run):
        path, _ = scene
        code, summary = run('--threads', 2, 'calibrate', path, tmp_path / 'c.json', *GRID_ARGS,
                            '--train-fraction', 0.75, '--refine')
        assert code == EXIT_OK
        assert summary['frames_used'] == 9
        assert summary['holdout_frames'] == 3
        assert summary['holdout_mean_best_iou'] == pytest.approx(1.0)

    def test_empty_dataset(self, empty_scene, tmp_path, run):
        assert run('calibrate', empty_scene, tmp_path / 'c.json')[0] == EXIT_USAGE

    def test_config_file_grid(self, scene, tmp_path, run):
        path, _ = scene
        config = tmp_path / 'pipeline.json'
        config.write_text(json.dumps({'grid': {'alpha_range': [0, 16, 5], 'beta_range': [0, 0.8, 5]}}))
        code, summary = run('--config', config, 'calibrate', path, tmp_path / 'c.json')
        assert code == EXIT_OK
        assert summary['alpha'] == 8.0

    def test_bad_config_file(self, scene, tmp_path, run):
        path, _ = scene
        config = tmp_path / 'pipeline.json'
        config.write_text(json.dumps({'grids': {}}))
        assert run('--config', config, 'calibrate', path, tmp_path / 'c.json')[0] == EXIT_USAGE

    @pytest.mark.parametrize('content', [
        {'anchors': 5},
        {'grid': {'alpha_range': 3}},
        {'proposals': {'max_proposals': 'many'}},
        {'eval': {'area_ranges': [5]}},
    ])
    def test_wrongly_typed_config_file(self, scene, tmp_path, run, content):
        path, _ = scene
        config = tmp_path / 'pipeline.json'
        config.write_text(json.dumps(content))
        assert run('--config', config, 'calibrate', path, tmp_path / 'c.json') == (EXIT_USAGE, None)

    def test_malformed_params_file(self, scene, tmp_path, run):
        path, _ = scene
        report = tmp_path / 'calibration.json'
        report.write_text(json.dumps({'best': {'alpha': 8, 'beta': 0.4}, 'grid_objectives': 5}))
        assert run('propose', path, tmp_path / 'p.jsonl', '--params', report) == (EXIT_USAGE, None)


class TestEval:

    def test_ground_truth_as_proposals(self, scene, tmp_path, run):
        path, _ = scene
        frames, _ = load_dataset(path)
        proposals = tmp_path / 'gt.jsonl'
        save_proposals([
            ProposalSet(f.frame_id, [b.to_list() for b in f.gt_boxes], list(range(len(f.gt_boxes))))
            for f in frames
        ], proposals)

        csv_out = tmp_path / 'recall.csv'
        code, summary = run('eval', proposals, path, '--csv-out', csv_out, '--json-out', tmp_path / 'e.json')
        assert code == EXIT_OK
        assert summary['recall_at'] == {'0.5': 1.0, '0.75': 1.0}
        assert summary['mean_best_iou'] == 1.0
        assert csv_out.read_text().splitlines()[0] == 'threshold,area,recall,gt_count'

    def test_empty_proposals(self, scene, tmp_path, run):
        path, _ = scene
        frames, _ = load_dataset(path)
        proposals = tmp_path / 'none.jsonl'
        save_proposals([ProposalSet(f.frame_id) for f in frames], proposals)
        code, summary = run('eval', proposals, path)
        assert code == EXIT_OK
        assert summary['recall_at']['0.5'] == 0.0

    def test_frame_mismatch(self, scene, tmp_path, run):
        path, _ = scene
        proposals = tmp_path / 'one.jsonl'
        save_proposals([ProposalSet(999)], proposals)
        assert run('eval', proposals, path)[0] == EXIT_USAGE

    def test_recall_plot(self, scene, tmp_path, run):
        path, _ = scene
        proposals = tmp_path / 'p.jsonl'
        run('propose', path, proposals, '--alpha', 8, '--beta', 0.4)
        code, summary = run('eval', proposals, path, '--plot', tmp_path / 'recall.png')
        assert code == EXIT_OK
        assert summary['recall_at']['0.5'] == 1.0
        assert (tmp_path / 'recall.png').exists()


class TestBench:

    def test_reports_throughput(self, scene, tmp_path, run):
        path, _ = scene
        code, summary = run('bench', path, '--alpha', 8, '--beta', 0.4, '--repetitions', 2,
                            '--out', tmp_path / 'bench.json')
        assert code == EXIT_OK
        assert summary['frames_processed'] == 12
        assert summary['frames_per_second'] > 0
        assert summary['frames_per_second'] == pytest.approx(
            summary['frames_processed'] / summary['wall_seconds'])
        assert json.loads((tmp_path / 'bench.json').read_text())['repetitions'] == 2


class TestRender:

    @pytest.fixture
    def one_frame(self, tmp_path):
        path = tmp_path / 'one.jsonl'
        frame = Frame(0, gt_boxes=[BoundingBox(10, 10, 50, 40)], gt_classes=['car'])
        save_dataset([frame], {'front': pinhole_calibration(160, 90, 100.0)}, path)
        proposals = tmp_path / 'one_proposals.jsonl'
        save_proposals([ProposalSet(0, [[60, 20, 100, 80]], [0])], proposals)
        return path, proposals

    def test_draws_both_kinds(self, one_frame, tmp_path, run):
        path, proposals = one_frame
        out = tmp_path / 'frame.ppm'
        code, summary = run('render', path, proposals, '--frame-id', 0, out)
        assert code == EXIT_OK
        assert (summary['gt_boxes'], summary['proposals']) == (1, 1)

        image = read_ppm(out)
        assert image.shape == (90, 160, 3)
        colors = {tuple(c) for c in image.reshape(-1, 3).tolist()}
        assert colors == {(0, 0, 0), GT_COLOR, PROPOSAL_COLOR}
        assert np.all(image[10, 10:50] == GT_COLOR)

    def test_deterministic(self, one_frame, tmp_path, run):
        path, proposals = one_frame
        run('render', path, proposals, '--frame-id', 0, tmp_path / 'a.ppm')
        run('render', path, proposals, '--frame-id', 0, tmp_path / 'b.ppm')
        assert (tmp_path / 'a.ppm').read_bytes() == (tmp_path / 'b.ppm').read_bytes()

    def test_unknown_frame(self, one_frame, tmp_path, run):
        path, proposals = one_frame
        assert run('render', path, proposals, '--frame-id', 7, tmp_path / 'x.ppm') == (EXIT_USAGE, None)


class TestHeatmap:

    def test_plots_report(self, scene, tmp_path, run):
        path, _ = scene
        report = tmp_path / 'calibration.json'
        run('calibrate', path, report, *GRID_ARGS)
        code, _ = run('heatmap', report, tmp_path / 'heat.png', '--scale-law', tmp_path / 'law.png')
        assert code == EXIT_OK
        assert (tmp_path / 'heat.png').exists()
        assert (tmp_path / 'law.png').exists()


class TestUsage:

    def test_no_command(self, run):
        assert run() == (EXIT_USAGE, None)

    def test_threads_must_be_positive(self, scene, tmp_path, run):
        path, _ = scene
        assert run('--threads', 0, 'calibrate', path, tmp_path / 'c.json') == (EXIT_USAGE, None)

    def test_argparse_errors_exit_2(self, run):
        with pytest.raises(SystemExit) as exc:
            run('propose')
        assert exc.value.code == EXIT_USAGE
