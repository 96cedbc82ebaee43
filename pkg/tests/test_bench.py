import pytest

from rrpn.core.bench import BenchReport, run_benchmark
from rrpn.core.dataset import Frame, SynthConfig, synthesize
from rrpn.core.proposals import AnchorConfig

from conftest import TRUE_PARAMS


@pytest.fixture(scope='module')
def dense_scene():
    cfg = SynthConfig(n_frames=100, pois_per_frame=(30, 30), seed=3)
    frames, calib = synthesize(cfg)
    return frames, {cfg.calib_ref: calib}


def test_report_invariant(dense_scene):
    frames, calibs = dense_scene
    report = run_benchmark(frames, calibs, AnchorConfig(), TRUE_PARAMS, repetitions=2)
    assert isinstance(report, BenchReport)
    assert report.frames_processed == 100
    assert report.frames_per_second > 0
    assert report.frames_per_second == pytest.approx(report.frames_processed / report.wall_seconds)
    assert report.wall_seconds <= report.median_seconds
    assert report.pois_per_frame_mean == 30.0
    assert 0 < report.proposals_per_frame_mean <= 2000
    assert report.mode == 'single'


def test_dense_frames_keep_up_with_sensor_rate(dense_scene):
    frames, calibs = dense_scene
    report = run_benchmark(frames, calibs, AnchorConfig(), TRUE_PARAMS, repetitions=5)
    assert report.frames_per_second >= 90


def test_per_frame_cost_does_not_grow_with_dataset(dense_scene):
    frames, calibs = dense_scene
    doubled = frames + [Frame(f.frame_id + 1000, f.detections, f.gt_boxes, f.gt_classes) for f in frames]
    single = run_benchmark(frames, calibs, AnchorConfig(), TRUE_PARAMS, repetitions=5)
    double = run_benchmark(doubled, calibs, AnchorConfig(), TRUE_PARAMS, repetitions=5)
    assert double.frames_per_second >= single.frames_per_second / 2


def test_frame_parallel_mode(dense_scene):
    frames, calibs = dense_scene
    report = run_benchmark(frames[:20], calibs, AnchorConfig(), TRUE_PARAMS, repetitions=1, threads=3)
    assert report.mode == 'frame-parallel'
    assert report.threads == 3
    assert report.pois_per_frame_mean == 30.0
    assert report.to_dict()['cpu_count'] >= 1


def test_empty_dataset():
    report = run_benchmark([], {}, AnchorConfig(), TRUE_PARAMS, repetitions=1)
    assert report.frames_processed == 0
    assert report.pois_per_frame_mean == 0.0


def test_argument_validation(dense_scene):
    frames, calibs = dense_scene
    with pytest.raises(ValueError):
        run_benchmark(frames, calibs, AnchorConfig(), TRUE_PARAMS, repetitions=0)
    with pytest.raises(ValueError):
        run_benchmark(frames, calibs, AnchorConfig(), TRUE_PARAMS, threads=0)
