"""
Perspective Transformation of Radar Detections

Maps radar returns reported in the vehicle frame (x forward, y left, z up)
into the camera image plane through a 3x4 projection matrix H:

    w * [u, v, 1]^T = H * [X, Y, Z, 1]^T

The projected pixel, together with the detection's distance, is a
Point of Interest (POI) around which anchors are generated.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

# Points with homogeneous scale at or below this are on/behind the camera plane
EPSILON_W = 1e-6


@dataclass(frozen=True)
class VehiclePoint:
    """3D point in the vehicle frame, meters."""
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"VehiclePoint coordinates must be finite: {self}")


@dataclass(frozen=True)
class ImagePoint:
    """Continuous pixel coordinates. May lie outside the image."""
    u: float
    v: float


@dataclass(frozen=True)
class CameraCalibration:
    """
    Camera projection matrix plus image size.

    Attributes:
        h: 12 floats, row-major 3x4 matrix H
        image_width: Image width in pixels
        image_height: Image height in pixels
    """
    h: tuple
    image_width: int
    image_height: int

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        if len(h) != 12:
            raise ValueError(f"Projection matrix needs 12 values, got {len(h)}")
        if not all(math.isfinite(x) for x in h):
            raise ValueError("Projection matrix entries must be finite")
        object.__setattr__(self, 'h', h)

        if int(self.image_width) != self.image_width or self.image_width <= 0:
            raise ValueError(f"image_width must be a positive integer, got {self.image_width}")
        if int(self.image_height) != self.image_height or self.image_height <= 0:
            raise ValueError(f"image_height must be a positive integer, got {self.image_height}")
        object.__setattr__(self, 'image_width', int(self.image_width))
        object.__setattr__(self, 'image_height', int(self.image_height))

        if abs(np.linalg.det(self.matrix[:, :3])) == 0.0:
            raise ValueError("Left 3x3 block of the projection matrix is singular")

    @property
    def matrix(self) -> np.ndarray:
        """H as a (3, 4) float array."""
        return np.asarray(self.h, dtype=float).reshape(3, 4)

    def scaled(self, c: float) -> "CameraCalibration":
        """Same camera with H multiplied by c."""
        return CameraCalibration(tuple(c * x for x in self.h), self.image_width, self.image_height)

    def to_dict(self) -> dict:
        return {'h': list(self.h), 'width': self.image_width, 'height': self.image_height}

    @classmethod
    def from_dict(cls, data: dict) -> "CameraCalibration":
        return cls(h=tuple(data['h']), image_width=data['width'], image_height=data['height'])


@dataclass(frozen=True)
class RadarDetection:
    """
    One radar return.

    Attributes:
        position: Return position in the vehicle frame
        range: Measured radial distance in meters, or None if not reported
        range_rate: Radial velocity in m/s (signed)
        id: Opaque integer tag
    """
    position: VehiclePoint
    range: Optional[float] = None
    range_rate: float = 0.0
    id: int = 0

    def __post_init__(self):
        if not math.isfinite(self.range_rate):
            raise ValueError(f"Detection {self.id}: range_rate must be finite")
        if self.range is not None:
            if not math.isfinite(self.range) or self.range < 0:
                raise ValueError(f"Detection {self.id}: range must be finite and >= 0, got {self.range}")
            planar = math.hypot(self.position.x, self.position.y)
            if abs(self.range - planar) > 1e-6 * max(planar, self.range, 1e-12):
                raise ValueError(
                    f"Detection {self.id}: range {self.range} disagrees with "
                    f"position norm {planar}"
                )

    @property
    def distance(self) -> float:
        """Reported range, or the planar norm of the position when absent."""
        if self.range is not None:
            return self.range
        return math.hypot(self.position.x, self.position.y)


@dataclass(frozen=True)
class PointOfInterest:
    """A radar detection mapped to pixel coordinates, distance retained."""
    u: float
    v: float
    distance: float
    source_id: int


def _project_arrays(
    points: np.ndarray,
    calib: CameraCalibration
) -> tuple:
    """
    Project an (N, 3) array of vehicle points.

    Each output element is computed with explicit elementwise products so a
    point projects to the same bits whether it is alone or in a batch.

    Returns:
        (u, v, w) arrays of shape (N,)
    """
    h = calib.matrix
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    a = h[0, 0] * x + h[0, 1] * y + h[0, 2] * z + h[0, 3]
    b = h[1, 0] * x + h[1, 1] * y + h[1, 2] * z + h[1, 3]
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2] * z + h[2, 3]
    with np.errstate(divide='ignore', invalid='ignore'):
        u = a / w
        v = b / w
    return u, v, w


def _visible_mask(
    u: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    calib: CameraCalibration,
    margin_px: float,
    epsilon_w: float
) -> np.ndarray:
    in_front = w > epsilon_w
    inside = (
        (u >= -margin_px) & (u <= calib.image_width + margin_px) &
        (v >= -margin_px) & (v <= calib.image_height + margin_px)
    )
    return in_front & inside


def project_point(
    point: VehiclePoint,
    calib: CameraCalibration,
    epsilon_w: float = EPSILON_W
) -> Optional[ImagePoint]:
    """Pixel of a vehicle point with no image-bounds check; None behind the camera."""
    u, v, w = _project_arrays(np.array([[point.x, point.y, point.z]], dtype=float), calib)
    if not w[0] > epsilon_w:
        return None
    return ImagePoint(float(u[0]), float(v[0]))


def project(
    det: RadarDetection,
    calib: CameraCalibration,
    margin_px: float = 0.0,
    epsilon_w: float = EPSILON_W
) -> Optional[PointOfInterest]:
    """
    Project one radar detection into the image.

    Args:
        det: Radar detection in vehicle coordinates
        calib: Camera calibration
        margin_px: Pixels the image rectangle is expanded by before rejecting
        epsilon_w: Minimum homogeneous scale; smaller means behind the camera

    Returns:
        PointOfInterest, or None when the point is behind the camera plane or
        falls outside the (expanded) image
    """
    pois = project_frame([det], calib, margin_px=margin_px, epsilon_w=epsilon_w)
    return pois[0] if pois else None


def project_frame(
    dets: Sequence[RadarDetection],
    calib: CameraCalibration,
    margin_px: float = 0.0,
    epsilon_w: float = EPSILON_W
) -> List[PointOfInterest]:
    """
    Project a frame's detections, keeping input order and dropping
    detections that are not visible.
    """
    if len(dets) == 0:
        return []

    points = np.array([(d.position.x, d.position.y, d.position.z) for d in dets], dtype=float)
    u, v, w = _project_arrays(points, calib)
    keep = _visible_mask(u, v, w, calib, margin_px, epsilon_w)

    return [
        PointOfInterest(u=float(u[i]), v=float(v[i]), distance=dets[i].distance, source_id=dets[i].id)
        for i in np.flatnonzero(keep)
    ]


def back_project(u: float, v: float, z: float, calib: CameraCalibration) -> VehiclePoint:
    """
    Find the vehicle point at height z that projects onto pixel (u, v).

    Solves H[:, :2] (x, y) - w (u, v, 1) = -(H[:, 2] z + H[:, 3]) for (x, y, w).

    Raises:
        ValueError: if the ray through (u, v) is parallel to the plane at height z
    """
    h = calib.matrix
    system = np.column_stack([h[:, 0], h[:, 1], -np.array([u, v, 1.0])])
    rhs = -(h[:, 2] * z + h[:, 3])
    try:
        x, y, w = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"Pixel ({u}, {v}) has no intersection with plane z={z}") from exc
    return VehiclePoint(float(x), float(y), float(z))


def pinhole_calibration(
    width: int = 1600,
    height: int = 900,
    focal: float = 1000.0,
    cx: Optional[float] = None,
    cy: Optional[float] = None,
    camera_height: float = 1.5
) -> CameraCalibration:
    """
    Forward-looking pinhole camera mounted camera_height meters above the
    vehicle origin.

    Camera axes (right, down, forward) are a permutation of the vehicle
    axes: x_cam = -y, y_cam = -(z - camera_height), z_cam = x.
    """
    cx = width / 2.0 if cx is None else cx
    cy = height / 2.0 if cy is None else cy
    k = np.array([
        [focal, 0.0, cx],
        [0.0, focal, cy],
        [0.0, 0.0, 1.0],
    ])
    rt = np.array([
        [0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, camera_height],
        [1.0, 0.0, 0.0, 0.0],
    ])
    return CameraCalibration(tuple((k @ rt).ravel()), width, height)
