"""Pinhole projection models, pixel Jacobians, triangulation, and plane fitting.

Conventions used throughout the library:

* The world frame is the camera frame: the camera has identity rotation and
  zero translation, and the projector extrinsics carry the full rig pose.
* Image coordinates are continuous, in pixels, with the center of the raster
  pixel ``(i, j)`` at ``(i + 0.5, j + 0.5)``.
* Lengths are millimeters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CalibrationError,
    DegenerateInput,
    DegenerateProjection,
    SingularGeometry,
)

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsic parameters in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix."""
        return np.array(
            [
                [self.fx, self.skew, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class Extrinsics:
    """Rigid world-to-device transform: ``p_device = R @ p_world + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("R must be 3x3")
        if t.shape != (3,):
            raise ValueError("t must be a 3-vector")
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("R must be orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("R must be a proper rotation (det = 1)")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))


def look_at_extrinsics(center, target, up_hint=(0.0, 1.0, 0.0)) -> Extrinsics:
    """Extrinsics for a device at ``center`` whose optical axis points at ``target``.

    ``up_hint`` follows the imaging convention of y pointing down the image.
    """
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    nz = np.linalg.norm(z)
    if nz == 0:
        raise ValueError("target coincides with center")
    z = z / nz
    x = np.cross(np.asarray(up_hint, dtype=float), z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("up_hint is parallel to the viewing direction")
    x = x / nx
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    return Extrinsics(R, -R @ center)


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 projection matrix mapping homogeneous world points to pixels."""

    C: np.ndarray

    def __post_init__(self) -> None:
        C = np.asarray(self.C, dtype=float)
        if C.shape != (3, 4):
            raise ValueError("projection matrix must be 3x4")
        if np.linalg.matrix_rank(C[:, :3]) != 3:
            raise ValueError("left 3x3 block must have full rank")
        object.__setattr__(self, "C", C)


@dataclass(frozen=True)
class CalibrationData:
    """Camera and projector models of the rig.

    The camera sits at the world origin with identity rotation; only the
    projector carries a pose.
    """

    camera: Intrinsics
    projector: Intrinsics
    projector_pose: Extrinsics
    camera_resolution: tuple[int, int]
    projector_resolution: tuple[int, int]
    camera_pose: Extrinsics = field(default_factory=Extrinsics.identity)

    def __post_init__(self) -> None:
        for name, res in (
            ("camera_resolution", self.camera_resolution),
            ("projector_resolution", self.projector_resolution),
        ):
            if len(res) != 2 or res[0] <= 0 or res[1] <= 0:
                raise ValueError(f"{name} must be positive (width, height)")
        if (
            np.abs(self.camera_pose.R - np.eye(3)).max() > _ORTHO_TOL
            or np.abs(self.camera_pose.t).max() > _ORTHO_TOL
        ):
            raise ValueError("camera pose must be identity (world frame = camera frame)")

    @property
    def camera_matrix(self) -> ProjectionMatrix:
        return compose_projection(self.camera, self.camera_pose)

    @property
    def projector_matrix(self) -> ProjectionMatrix:
        return compose_projection(self.projector, self.projector_pose)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationData":
        """Parse the calibration document; errors name the offending field."""
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"invalid JSON: {exc}") from exc
        cam = _require_mapping(doc, "camera")
        proj = _require_mapping(doc, "projector")
        camera = _parse_intrinsics(cam, "camera")
        projector = _parse_intrinsics(proj, "projector")
        R = _parse_matrix(proj, "projector.R", (3, 3))
        t = _parse_matrix(proj, "projector.t", (3,))
        try:
            pose = Extrinsics(R, t)
        except ValueError as exc:
            raise CalibrationError(f"projector.R: {exc}") from exc
        return cls(
            camera=camera,
            projector=projector,
            projector_pose=pose,
            camera_resolution=_parse_resolution(cam, "camera.resolution"),
            projector_resolution=_parse_resolution(proj, "projector.resolution"),
        )

    @classmethod
    def load(cls, path) -> "CalibrationData":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_json(fh.read())

    def to_json(self) -> str:
        doc = {
            "camera": {
                "fx": self.camera.fx,
                "fy": self.camera.fy,
                "cx": self.camera.cx,
                "cy": self.camera.cy,
                "skew": self.camera.skew,
                "resolution": list(self.camera_resolution),
            },
            "projector": {
                "fx": self.projector.fx,
                "fy": self.projector.fy,
                "cx": self.projector.cx,
                "cy": self.projector.cy,
                "skew": self.projector.skew,
                "R": self.projector_pose.R.tolist(),
                "t": self.projector_pose.t.tolist(),
                "resolution": list(self.projector_resolution),
            },
        }
        return json.dumps(doc, indent=2)

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @property
    def projector_center(self) -> np.ndarray:
        """Projector optical center in world coordinates."""
        pose = self.projector_pose
        return -pose.R.T @ pose.t


def _require_mapping(doc, key):
    if not isinstance(doc, dict) or key not in doc or not isinstance(doc[key], dict):
        raise CalibrationError(f"missing or invalid section: {key}")
    return doc[key]


def _parse_intrinsics(section, prefix) -> Intrinsics:
    values = {}
    for name in ("fx", "fy", "cx", "cy"):
        if name not in section or not isinstance(section[name], (int, float)):
            raise CalibrationError(f"{prefix}.{name}: missing or non-numeric")
        values[name] = float(section[name])
    skew = section.get("skew", 0.0)
    if not isinstance(skew, (int, float)):
        raise CalibrationError(f"{prefix}.skew: non-numeric")
    try:
        return Intrinsics(skew=float(skew), **values)
    except ValueError as exc:
        raise CalibrationError(f"{prefix}.fx/fy: {exc}") from exc


def _parse_matrix(section, field_name, shape) -> np.ndarray:
    key = field_name.split(".")[-1]
    if key not in section:
        raise CalibrationError(f"{field_name}: missing")
    try:
        arr = np.asarray(section[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise CalibrationError(f"{field_name}: non-numeric") from exc
    if arr.shape != shape:
        raise CalibrationError(f"{field_name}: expected shape {shape}, got {arr.shape}")
    return arr


def _parse_resolution(section, field_name) -> tuple[int, int]:
    key = field_name.split(".")[-1]
    res = section.get(key)
    if (
        not isinstance(res, (list, tuple))
        or len(res) != 2
        or not all(isinstance(v, int) and v > 0 for v in res)
    ):
        raise CalibrationError(f"{field_name}: expected [width, height] positive integers")
    return (res[0], res[1])


# ---------------------------------------------------------------------------
# Projection operations
# ---------------------------------------------------------------------------


def compose_projection(intr: Intrinsics, extr: Extrinsics) -> ProjectionMatrix:
    """Compose ``C = A @ [R, t]`` from intrinsics and extrinsics."""
    Rt = np.hstack([extr.R, extr.t[:, None]])
    return ProjectionMatrix(intr.matrix @ Rt)


def project(C: ProjectionMatrix, point) -> tuple[float, float, float]:
    """Project a world point, returning ``(u, v, s)`` with ``s`` the scale factor.

    Raises
    ------
    DegenerateProjection
        If ``|s| < 1e-12`` (point on the camera plane).
    """
    p = np.append(np.asarray(point, dtype=float), 1.0)
    uvw = C.C @ p
    s = uvw[2]
    if abs(s) < 1e-12:
        raise DegenerateProjection("projection scale factor is zero")
    return (uvw[0] / s, uvw[1] / s, s)


def project_points(C: ProjectionMatrix, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of ``(..., 3)`` points.

    Returns ``(uv, s)`` where ``uv`` has shape ``(..., 2)``. No error is raised
    for degenerate points; callers must check ``s`` themselves.
    """
    pts = np.asarray(points, dtype=float)
    uvw = pts @ C.C[:, :3].T + C.C[:, 3]
    s = uvw[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = uvw[..., :2] / s[..., None]
    return uv, s


def pixel_jacobian(C: ProjectionMatrix, point) -> np.ndarray:
    """2x3 matrix of pixel-position derivatives w.r.t. world coordinates (px/mm).

    Closed-form quotient rule on the pinhole model.
    """
    p = np.append(np.asarray(point, dtype=float), 1.0)
    uvw = C.C @ p
    w = uvw[2]
    if abs(w) < 1e-12:
        raise DegenerateProjection("projection scale factor is zero")
    # d(u)/dx_k = (C[0,k] * w - C[2,k] * num_u) / w^2, same pattern for v
    num = uvw[:2]
    J = (C.C[:2, :3] * w - np.outer(num, C.C[2, :3])) / (w * w)
    return J


def pixel_jacobian_map(C: ProjectionMatrix, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`pixel_jacobian` over ``(..., 3)`` points -> ``(..., 2, 3)``.

    Degenerate points yield non-finite entries instead of raising.
    """
    pts = np.asarray(points, dtype=float)
    uvw = pts @ C.C[:, :3].T + C.C[:, 3]
    w = uvw[..., 2]
    num = uvw[..., :2]
    with np.errstate(divide="ignore", invalid="ignore"):
        J = (
            C.C[:2, :3] * w[..., None, None]
            - num[..., :, None] * C.C[2, :3]
        ) / (w * w)[..., None, None]
    return J


def _triangulation_rows(camC, projC, u, v, u_p):
    A = np.array(
        [
            u * camC.C[2] - camC.C[0],
            v * camC.C[2] - camC.C[1],
            u_p * projC.C[2] - projC.C[0],
        ]
    )
    return A[:, :3], -A[:, 3]


def triangulate(
    camC: ProjectionMatrix,
    projC: ProjectionMatrix,
    cam_pixel: tuple[float, float],
    u_p: float,
) -> np.ndarray:
    """Intersect a camera pixel ray with a projector column plane.

    Solves the exact 3x3 linear system built from the two camera-pixel
    equations and the one projector-column equation. Fringes vary only along
    the projector's u axis, so the projector row equation is not used.

    Raises
    ------
    SingularGeometry
        If the system condition number exceeds 1e12 (near-parallel rays).
    """
    M, rhs = _triangulation_rows(camC, projC, cam_pixel[0], cam_pixel[1], u_p)
    if np.linalg.cond(M) > 1e12:
        raise SingularGeometry("triangulation system is ill-conditioned")
    return np.linalg.solve(M, rhs)


def triangulate_map(
    camC: ProjectionMatrix,
    projC: ProjectionMatrix,
    cam_pixels: np.ndarray,
    u_p: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched triangulation of ``(N, 2)`` camera pixels against ``(N,)`` columns.

    Returns ``(points, ok)``; pixels whose row-normalized system determinant
    falls below 1e-12 are marked not-ok instead of raising.
    """
    uv = np.asarray(cam_pixels, dtype=float)
    up = np.asarray(u_p, dtype=float)
    n = uv.shape[0]
    M = np.empty((n, 3, 3))
    rhs = np.empty((n, 3))
    rows = (
        uv[:, 0, None] * camC.C[2] - camC.C[0],
        uv[:, 1, None] * camC.C[2] - camC.C[1],
        up[:, None] * projC.C[2] - projC.C[0],
    )
    for i, row in enumerate(rows):
        M[:, i, :] = row[:, :3]
        rhs[:, i] = -row[:, 3]
    norms = np.linalg.norm(M, axis=2)
    norms = np.where(norms == 0, 1.0, norms)
    Mn = M / norms[:, :, None]
    ok = np.abs(np.linalg.det(Mn)) > 1e-12
    pts = np.full((n, 3), np.nan)
    if np.any(ok):
        pts[ok] = np.linalg.solve(M[ok], rhs[ok])
    return pts, ok


# ---------------------------------------------------------------------------
# Plane fitting
# ---------------------------------------------------------------------------


def fit_plane(points: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Total-least-squares plane through ``(N, 3)`` points.

    Returns ``(normal, offset, basis)`` with the plane ``normal . p = offset``.
    The basis columns are the in-plane direction of maximal point spread (the
    candidate stage direction), the second in-plane direction, and the normal.
    The first column's sign is fixed to a positive x component, falling back
    to positive y, so outputs are deterministic.

    Raises
    ------
    DegenerateInput
        For fewer than 3 points or (near-)collinear point sets.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 3:
        raise DegenerateInput("plane fitting needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals[2], 1e-300)
    if evals[1] / scale < 1e-18:
        raise DegenerateInput("points are collinear")
    normal = evecs[:, 0]
    r_hat = evecs[:, 2]
    if r_hat[0] < 0 or (r_hat[0] == 0 and r_hat[1] < 0):
        r_hat = -r_hat
    second = np.cross(normal, r_hat)
    basis = np.column_stack([r_hat, second, normal])
    return normal, float(normal @ centroid), basis
