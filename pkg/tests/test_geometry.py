import math

import numpy as np
import pytest

from rrpn.core.geometry import (
    EPSILON_W,
    CameraCalibration,
    ImagePoint,
    RadarDetection,
    VehiclePoint,
    back_project,
    pinhole_calibration,
    project,
    project_frame,
    project_point,
)


def det(x, y, z, id=0, range=None):
    return RadarDetection(VehiclePoint(x, y, z), range=range, id=id)


def hand_project(h, point):
    """Plain 3x4 multiply and divide."""
    p = (point[0], point[1], point[2], 1.0)
    rows = [sum(h[4 * r + c] * p[c] for c in range(4)) for r in range(3)]
    return rows[0] / rows[2], rows[1] / rows[2], rows[2]


def random_calibration(rng):
    while True:
        h = rng.normal(size=12)
        if abs(np.linalg.det(h.reshape(3, 4)[:, :3])) > 0.1:
            return CameraCalibration(tuple(h), 1000, 1000)


class TestProject:

    def test_identity_divides_by_depth(self, identity_calib):
        poi = project(det(2, 0, 4), identity_calib)
        assert (poi.u, poi.v) == (0.5, 0.0)

    def test_optical_axis_maps_to_origin(self, identity_calib):
        poi = project(det(0, 0, 1), identity_calib)
        assert (poi.u, poi.v) == (0.0, 0.0)

    def test_behind_camera_is_rejected(self, identity_calib):
        assert project(det(1, 1, -2), identity_calib) is None

    def test_camera_plane_is_rejected(self, identity_calib):
        assert project(det(1, 1, EPSILON_W / 2), identity_calib) is None

    def test_pinhole_matches_hand_multiply(self):
        calib = pinhole_calibration(1600, 900, 1000.0, 800.0, 450.0, camera_height=0.0)
        poi = project(det(20, -2, 0), calib)
        u, v, _ = hand_project(calib.h, (20, -2, 0))
        assert poi.u == pytest.approx(u, abs=1e-9)
        assert poi.v == pytest.approx(v, abs=1e-9)
        assert (poi.u, poi.v) == pytest.approx((900.0, 450.0))

    def test_off_image_points_dropped_unless_margin(self, identity_calib):
        far_right = det(150, 0, 1)
        assert project(far_right, identity_calib) is None
        assert project(far_right, identity_calib, margin_px=60) is not None

    def test_distance_prefers_reported_range(self, identity_calib):
        d = det(3, 4, 5, range=5.0)
        assert project(d, identity_calib).distance == 5.0
        assert project(det(3, 4, 5), identity_calib).distance == pytest.approx(5.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            calib = random_calibration(rng)
            c = rng.uniform(0.1, 10.0)
            points = rng.uniform(-10, 10, size=(500, 3))
            dets = [det(*p, id=i) for i, p in enumerate(points)]

            a = project_frame(dets, calib, margin_px=1e9)
            b = project_frame(dets, calib.scaled(c), margin_px=1e9)

            assert [p.source_id for p in a] == [p.source_id for p in b]
            for pa, pb in zip(a, b):
                assert pa.u == pytest.approx(pb.u, abs=1e-9)
                assert pa.v == pytest.approx(pb.v, abs=1e-9)

    def test_behind_camera_never_emitted_and_reconstruction(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            calib = random_calibration(rng)
            points = rng.uniform(-10, 10, size=(500, 3))
            dets = [det(*p, id=i) for i, p in enumerate(points)]

            for poi in project_frame(dets, calib, margin_px=1e9):
                point = points[poi.source_id]
                hp = calib.matrix @ np.append(point, 1.0)
                w = hp[2]
                assert w > EPSILON_W
                rebuilt = w * np.array([poi.u, poi.v, 1.0])
                assert np.linalg.norm(rebuilt - hp) <= 1e-9 * np.linalg.norm(hp)


class TestProjectFrame:

    def test_empty(self, identity_calib):
        assert project_frame([], identity_calib) == []

    def test_filters_behind_camera(self, identity_calib):
        pois = project_frame([det(1, 1, 2, id=7), det(1, 1, -2, id=8)], identity_calib)
        assert len(pois) == 1
        assert pois[0].source_id == 7

    def test_frustum_points_keep_order(self, pinhole_calib):
        rng = np.random.default_rng(2)
        dets = []
        for i in range(30):
            u = rng.uniform(0, pinhole_calib.image_width)
            v = rng.uniform(500, pinhole_calib.image_height)
            dets.append(RadarDetection(back_project(u, v, 0.5, pinhole_calib), id=100 + i))

        pois = project_frame(dets, pinhole_calib)
        assert [p.source_id for p in pois] == [100 + i for i in range(30)]

    def test_equals_per_detection_projection(self, pinhole_calib):
        dets = [det(20, -2, 0.5, id=0), det(-5, 0, 0.5, id=1), det(30, 4, 0.5, id=2)]
        expected = [p for p in (project(d, pinhole_calib) for d in dets) if p is not None]
        assert project_frame(dets, pinhole_calib) == expected


class TestProjectPoint:

    def test_keeps_off_image_pixels(self, identity_calib):
        assert project(det(500, 0, 1), identity_calib) is None
        assert project_point(VehiclePoint(500, 0, 1), identity_calib) == ImagePoint(500.0, 0.0)

    def test_behind_camera(self, identity_calib):
        assert project_point(VehiclePoint(1, 1, -2), identity_calib) is None

    def test_same_bits_as_project(self, pinhole_calib):
        rng = np.random.default_rng(4)
        for x, y in zip(rng.uniform(5, 80, 50), rng.uniform(-20, 20, 50)):
            point = VehiclePoint(float(x), float(y), 0.5)
            poi = project(RadarDetection(point), pinhole_calib, margin_px=1e6)
            pixel = project_point(point, pinhole_calib)
            assert (pixel.u, pixel.v) == (poi.u, poi.v)


class TestBackProject:

    def test_round_trip(self, pinhole_calib):
        point = back_project(1000.0, 600.0, 0.5, pinhole_calib)
        assert point.z == 0.5
        poi = project(RadarDetection(point), pinhole_calib)
        assert poi.u == pytest.approx(1000.0, abs=1e-9)
        assert poi.v == pytest.approx(600.0, abs=1e-9)

    def test_pinhole_depth(self, pinhole_calib):
        # 1 m below the camera, v - cy = f * 1 / x
        point = back_project(800.0, 450.0 + 100.0, 0.5, pinhole_calib)
        assert point.x == pytest.approx(10.0)
        assert point.y == pytest.approx(0.0, abs=1e-12)


class TestValidation:

    def test_singular_left_block(self):
        with pytest.raises(ValueError):
            CameraCalibration((1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 1), 10, 10)

    def test_image_size_positive(self):
        with pytest.raises(ValueError):
            CameraCalibration((1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0), 0, 10)

    def test_wrong_matrix_size(self):
        with pytest.raises(ValueError):
            CameraCalibration((1, 0, 0), 10, 10)

    def test_range_must_match_position(self):
        with pytest.raises(ValueError):
            det(3, 4, 0, range=6.0)
        assert det(3, 4, 0, range=5.0).distance == 5.0

    def test_non_finite_position(self):
        with pytest.raises(ValueError):
            VehiclePoint(math.nan, 0, 0)

    def test_calibration_dict_round_trip(self, pinhole_calib):
        assert CameraCalibration.from_dict(pinhole_calib.to_dict()) == pinhole_calib
