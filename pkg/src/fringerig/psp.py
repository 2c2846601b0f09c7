"""Three-step phase retrieval and geometric-constraint temporal unwrapping.

The wrapped phase comes from the four-quadrant arctangent of the three fringe
images. Unwrapping uses the absolute phase of a virtual nearest reference
plane: per camera pixel, the plane point is projected into the projector and
its analytic phase serves as the lower bound that fixes the fringe order. The
reference plane can be rotated about the camera center to follow scenes whose
depth trends across the field of view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, DimensionMismatch, GrazingPlane
from .geometry import (
    CalibrationData,
    fit_plane,
    pixel_jacobian_map,
    project_points,
    triangulate_map,
)
from .patterns import TWO_PI, absolute_phase

DEFAULT_MODULATION_THRESHOLD = 0.02


def wrap_phase(phase):
    """Wrap any phase into (-pi, pi]."""
    wrapped = np.mod(-np.asarray(phase, dtype=float) + np.pi, TWO_PI)
    return np.pi - wrapped


@dataclass
class WrappedPhaseMap:
    """Per-pixel wrapped phase in (-pi, pi], modulation, and validity mask."""

    phi: np.ndarray
    modulation: np.ndarray
    mask: np.ndarray


def wrapped_phase_conventional(
    I1: np.ndarray,
    I2: np.ndarray,
    I3: np.ndarray,
    modulation_threshold: float = DEFAULT_MODULATION_THRESHOLD,
) -> WrappedPhaseMap:
    """Wrapped phase of a three-step set with a fixed 2*pi/3 shift.

    Pixels whose modulation falls below ``modulation_threshold`` (shadows,
    background) are masked out.

    Raises
    ------
    DimensionMismatch
        If the three images do not share one shape.
    """
    if not (I1.shape == I2.shape == I3.shape):
        raise DimensionMismatch("fringe images must share the same shape")
    num = np.sqrt(3.0) * (I1 - I3)
    den = 2.0 * I2 - I1 - I3
    phi = np.arctan2(num, den)
    modulation = np.sqrt(num * num + den * den) / 3.0
    mask = modulation >= modulation_threshold
    return WrappedPhaseMap(phi, modulation, mask)


@dataclass
class ReferencePlane:
    """Virtual unwrapping reference: per-pixel depth of the (rotated) plane."""

    depth: np.ndarray
    z_min: float
    theta: float = 0.0
    axis: tuple[float, float, float] = (0.0, 1.0, 0.0)


def _rotation_about_axis(axis, theta: float) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n == 0:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = a / n
    c, s = np.cos(theta), np.sin(theta)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def _camera_ray_grid(calibration: CalibrationData) -> np.ndarray:
    """Rays through all pixel centers, scaled to unit z (parameter = depth)."""
    width, height = calibration.camera_resolution
    intr = calibration.camera
    u = np.arange(width) + 0.5
    v = np.arange(height) + 0.5
    y = (v[:, None] - intr.cy) / intr.fy
    x = (u[None, :] - intr.cx - intr.skew * y) / intr.fx
    dirs = np.empty((height, width, 3))
    dirs[..., 0] = np.broadcast_to(x, (height, width))
    dirs[..., 1] = np.broadcast_to(y, (height, width))
    dirs[..., 2] = 1.0
    return dirs


def build_reference_plane(
    calibration: CalibrationData,
    z_min: float,
    theta: float = 0.0,
    axis=(0.0, 1.0, 0.0),
) -> ReferencePlane:
    """Reference plane at depth ``z_min``, optionally rotated by ``theta``.

    The rotation is applied about the camera center, then the plane is slid
    along z so its depth at the central pixel equals ``z_min`` again. The
    result is the per-pixel depth at which each camera ray meets the plane.

    Raises
    ------
    GrazingPlane
        If any camera ray is within ~1e-6 rad of parallel to the plane.
    """
    if z_min <= 0:
        raise ValueError("z_min must be positive")
    dirs = _camera_ray_grid(calibration)
    normal = np.array([0.0, 0.0, 1.0])
    if theta != 0.0:
        normal = _rotation_about_axis(axis, theta) @ normal

    width, height = calibration.camera_resolution
    intr = calibration.camera
    yc = (height / 2.0 - intr.cy) / intr.fy
    xc = (width / 2.0 - intr.cx - intr.skew * yc) / intr.fx
    center_ray = np.array([xc, yc, 1.0])
    # re-centering: the rotated plane must still pass through the central
    # pixel's point at depth z_min
    offset = normal @ (center_ray * z_min)

    denom = dirs @ normal
    ray_norms = np.linalg.norm(dirs, axis=-1)
    if np.any(np.abs(denom) / ray_norms < 1e-6):
        raise GrazingPlane("a camera ray is nearly parallel to the reference plane")
    depth = offset / denom
    if np.any(depth <= 0):
        raise GrazingPlane("reference plane lies behind the camera for some rays")
    return ReferencePlane(depth, float(z_min), float(theta), tuple(np.asarray(axis, float)))


def min_phase_map(
    calibration: CalibrationData, plane: ReferencePlane, pitch: float
) -> np.ndarray:
    """Absolute phase of the reference plane seen by every camera pixel.

    Back-projects each pixel to its plane point, projects that point into the
    projector, and evaluates the analytic fringe phase at the resulting
    (continuous) column.
    """
    dirs = _camera_ray_grid(calibration)
    points = dirs * plane.depth[..., None]
    uv, scale = project_points(calibration.projector_matrix, points)
    if np.any(scale <= 1e-12):
        raise DegenerateProjection("reference plane point behind the projector")
    return absolute_phase(pitch, uv[..., 0])


def fringe_order(min_phase: np.ndarray, wrapped: WrappedPhaseMap) -> np.ndarray:
    """Integer fringe order ``ceil((min_phase - phi) / 2*pi)`` per valid pixel.

    Masked pixels are left at order 0; consumers must honor the mask.
    """
    if min_phase.shape != wrapped.phi.shape:
        raise DimensionMismatch("min phase and wrapped phase shapes differ")
    k = np.ceil((min_phase - wrapped.phi) / TWO_PI)
    return np.where(wrapped.mask, k, 0.0).astype(int)


def unwrap(wrapped: WrappedPhaseMap, order: np.ndarray) -> np.ndarray:
    """Absolute phase ``phi + 2*pi*k``."""
    if order.shape != wrapped.phi.shape:
        raise DimensionMismatch("order and wrapped phase shapes differ")
    return wrapped.phi + TWO_PI * order


@dataclass
class PointCloud:
    """Per-pixel world coordinates in mm with a validity mask.

    ``points`` keeps the camera raster layout ``(height, width, 3)`` so error
    maps can be rasterized back; ``dropped`` counts pixels lost to singular
    triangulation geometry.
    """

    points: np.ndarray
    valid: np.ndarray
    dropped: int = 0

    @property
    def xyz(self) -> np.ndarray:
        """Valid points flattened to (N, 3) in raster order."""
        return self.points[self.valid]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.valid))


def reconstruct(
    phase: np.ndarray,
    mask: np.ndarray,
    calibration: CalibrationData,
    pitch: float,
) -> PointCloud:
    """Triangulate every valid pixel from its absolute phase.

    The phase fixes the projector column ``u_p = phase * pitch / (2*pi)``;
    each pixel is then intersected with that projector column plane. Pixels
    with singular geometry are dropped and counted.
    """
    height, width = phase.shape
    u = np.arange(width) + 0.5
    v = np.arange(height) + 0.5
    uu, vv = np.meshgrid(u, v)
    sel = np.asarray(mask, dtype=bool)
    uv = np.column_stack([uu[sel], vv[sel]])
    u_p = phase[sel] * pitch / TWO_PI
    pts, ok = triangulate_map(
        calibration.camera_matrix, calibration.projector_matrix, uv, u_p
    )
    points = np.full((height, width, 3), np.nan)
    valid = np.zeros((height, width), dtype=bool)
    idx = np.flatnonzero(sel)
    good = idx[ok]
    points.reshape(-1, 3)[good] = pts[ok]
    valid.reshape(-1)[good] = True
    return PointCloud(points, valid, dropped=int(np.count_nonzero(~ok)))


def derive_reference_tilt(
    cloud: PointCloud, region: tuple[int, int, int, int], axis=(0.0, 1.0, 0.0)
) -> float:
    """Estimate the reference-plane rotation angle from a planar cloud region.

    ``region`` is a pixel rectangle ``(row0, row1, col0, col1)``. The returned
    angle, applied about ``axis``, rotates a frontal plane to the plane fitted
    through the region's points.
    """
    r0, r1, c0, c1 = region
    sub_valid = cloud.valid[r0:r1, c0:c1]
    pts = cloud.points[r0:r1, c0:c1][sub_valid]
    normal, _offset, _basis = fit_plane(pts)
    if normal[2] < 0:
        normal = -normal
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    # component of the normal's tilt about the requested axis
    frontal = np.array([0.0, 0.0, 1.0])
    sin_theta = float(np.cross(frontal, normal) @ a)
    cos_theta = float(normal @ frontal)
    return float(np.arctan2(sin_theta, cos_theta))


def modulation_from_images(I1: np.ndarray, I2: np.ndarray, I3: np.ndarray) -> np.ndarray:
    """Modulation amplitude of a 2*pi/3-shifted three-step set."""
    num = np.sqrt(3.0) * (I1 - I3)
    den = 2.0 * I2 - I1 - I3
    return np.sqrt(num * num + den * den) / 3.0


__all__ = [
    "DEFAULT_MODULATION_THRESHOLD",
    "PointCloud",
    "ReferencePlane",
    "WrappedPhaseMap",
    "build_reference_plane",
    "derive_reference_tilt",
    "fringe_order",
    "min_phase_map",
    "modulation_from_images",
    "reconstruct",
    "unwrap",
    "wrap_phase",
    "wrapped_phase_conventional",
]
