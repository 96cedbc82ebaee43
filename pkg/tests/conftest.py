import sys
from pathlib import Path

import pytest

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from rrpn.core import (  # noqa: E402
    CameraCalibration,
    ScaleParams,
    SynthConfig,
    pinhole_calibration,
    synthesize,
)

TRUE_PARAMS = ScaleParams(8.0, 0.4)


@pytest.fixture
def identity_calib():
    """H = [I | 0] over a 100 x 100 image."""
    return CameraCalibration(
        h=(1, 0, 0, 0,
           0, 1, 0, 0,
           0, 0, 1, 0),
        image_width=100,
        image_height=100,
    )


@pytest.fixture
def pinhole_calib():
    return pinhole_calibration(1600, 900, 1000.0)


@pytest.fixture(scope='session')
def zero_noise_scene():
    """Small noise-free synthetic dataset built with TRUE_PARAMS."""
    cfg = SynthConfig(n_frames=30, pois_per_frame=(1, 6), true_params=TRUE_PARAMS, seed=7)
    frames, calib = synthesize(cfg)
    return frames, calib
