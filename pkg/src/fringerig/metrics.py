"""Quantitative evaluation: ideal-sphere comparison and error statistics.

Statistics use population definitions so the identity
``rmse^2 = mean^2 + std^2`` holds exactly; sums are compensated so results do
not depend on evaluation order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, EmptyInput
from .psp import PointCloud

# Reference error magnitudes (mm) measured on a motorized-stage hardware rig,
# kept as regression anchors for report comparisons. They are not targets the
# synthetic pipeline reproduces.
UNIFORM_CONVENTIONAL_REFERENCE = (0.176, 0.537, 0.565)  # mean, std, rmse
UNIFORM_CORRECTED_REFERENCE = (0.011, 0.337, 0.337)
NONUNIFORM_UNIFORM_MODE_REFERENCE = (-0.192, 0.331, 0.382)
NONUNIFORM_GENERAL_MODE_REFERENCE = (-0.183, 0.326, 0.374)


@dataclass
class SphereFit:
    center: np.ndarray
    radius: float
    rms_residual: float


def _check_noncoplanar(points: np.ndarray) -> None:
    centered = points - points.mean(axis=0)
    evals = np.linalg.eigvalsh(centered.T @ centered)
    scale = max(evals[2], 1e-300)
    if evals[0] / scale < 1e-16:
        raise DegenerateInput("points are coplanar; sphere radius is unobservable")


def fit_sphere(points: np.ndarray, fixed_radius: float | None = None) -> SphereFit:
    """Least-squares sphere through ``(N, 3)`` points.

    Free-radius fits use the linear algebraic formulation (the sphere
    equation rewritten as a linear system in center and radius terms) refined
    by one Gauss-Newton step on the geometric residual. With ``fixed_radius``
    only the center is estimated, by Gauss-Newton from the centroid-based
    initial guess.

    Raises
    ------
    DegenerateInput
        For fewer than 4 points (free radius), coplanar sets, or empty input.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateInput("points must be (N, 3)")
    if fixed_radius is None:
        if pts.shape[0] < 4:
            raise DegenerateInput("free-radius sphere fit needs at least 4 points")
        _check_noncoplanar(pts)
        B = np.column_stack([2.0 * pts, np.ones(len(pts))])
        f = np.sum(pts * pts, axis=1)
        sol, *_ = np.linalg.lstsq(B, f, rcond=None)
        center = sol[:3]
        radius = math.sqrt(max(sol[3] + center @ center, 0.0))
        center, radius = _gauss_newton_sphere(pts, center, radius, fixed_radius=None, steps=1)
    else:
        if pts.shape[0] < 1:
            raise DegenerateInput("fixed-radius sphere fit needs at least 1 point")
        if fixed_radius <= 0:
            raise ValueError("fixed_radius must be positive")
        centroid = pts.mean(axis=0)
        # centroid sits inside the visible cap; push it away from the data
        # mean normal direction by the radius for a sane starting center
        offsets = pts - centroid
        direction = np.zeros(3)
        if len(pts) >= 3:
            _, _, Vt = np.linalg.svd(offsets, full_matrices=False)
            direction = Vt[-1] if Vt.shape[0] == 3 else np.array([0.0, 0.0, 1.0])
            if direction[2] < 0:
                direction = -direction
        else:
            direction = np.array([0.0, 0.0, 1.0])
        center = centroid + direction * fixed_radius
        center, radius = _gauss_newton_sphere(
            pts, center, fixed_radius, fixed_radius=fixed_radius, steps=100
        )
    residuals = np.linalg.norm(pts - center, axis=1) - radius
    return SphereFit(center, float(radius), float(np.sqrt(np.mean(residuals**2))))


def _gauss_newton_sphere(pts, center, radius, fixed_radius, steps):
    for _ in range(steps):
        diff = pts - center
        dist = np.linalg.norm(diff, axis=1)
        dist = np.where(dist == 0, 1e-300, dist)
        res = dist - radius
        if fixed_radius is None:
            J = np.column_stack([-diff / dist[:, None], -np.ones(len(pts))])
        else:
            J = -diff / dist[:, None]
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        center = center + step[:3]
        if fixed_radius is None:
            radius = radius + step[3]
        if np.linalg.norm(step) < 1e-12:
            break
    return center, radius


@dataclass
class ErrorReport:
    """Signed radial errors of a cloud against a sphere, with statistics.

    ``error_map`` rasterizes the per-point error back onto the camera pixel
    layout (NaN where invalid). ``std`` is the population standard deviation,
    so ``rmse**2 == mean**2 + std**2``.
    """

    errors: np.ndarray
    mean: float
    std: float
    rmse: float
    count: int
    error_map: np.ndarray
    valid: np.ndarray


def mad_outlier_mask(errors: np.ndarray, k: float = 8.0) -> np.ndarray:
    """Keep-mask rejecting errors beyond ``k`` median absolute deviations."""
    med = np.median(errors)
    mad = np.median(np.abs(errors - med))
    if mad == 0:
        return np.ones_like(errors, dtype=bool)
    return np.abs(errors - med) <= k * mad


def error_report(
    cloud: PointCloud,
    sphere: SphereFit,
    mad_k: float | None = None,
    erode_boundary_px: int = 0,
) -> ErrorReport:
    """Per-point signed error ``|p - center| - radius`` and its statistics.

    ``mad_k`` optionally rejects outliers beyond that many median absolute
    deviations; ``erode_boundary_px`` optionally shrinks the valid region to
    drop silhouette pixels. Both default off.

    Raises
    ------
    EmptyInput
        If the cloud has no valid points.
    """
    valid = cloud.valid.copy()
    for _ in range(erode_boundary_px):
        interior = valid.copy()
        interior[:1, :] = False
        interior[-1:, :] = False
        interior[:, :1] = False
        interior[:, -1:] = False
        interior[1:-1, 1:-1] = (
            valid[1:-1, 1:-1]
            & valid[:-2, 1:-1]
            & valid[2:, 1:-1]
            & valid[1:-1, :-2]
            & valid[1:-1, 2:]
        )
        valid = interior
    if not np.any(valid):
        raise EmptyInput("point cloud has no valid points")
    pts = cloud.points[valid]
    errors = np.linalg.norm(pts - sphere.center, axis=1) - sphere.radius
    if mad_k is not None:
        keep = mad_outlier_mask(errors, mad_k)
        flat_idx = np.flatnonzero(valid)
        drop_idx = flat_idx[~keep]
        valid.reshape(-1)[drop_idx] = False
        errors = errors[keep]
    mean = float(np.mean(errors))
    std = float(np.sqrt(np.mean((errors - mean) ** 2)))
    rmse = float(np.sqrt(mean * mean + std * std))
    error_map = np.full(cloud.valid.shape, np.nan)
    error_map[valid] = errors
    return ErrorReport(errors, mean, std, rmse, int(errors.size), error_map, valid)


@dataclass
class ImprovementSummary:
    """Relative change of error statistics between two reports."""

    rmse_change: float
    std_change: float
    mean_a: float
    mean_b: float
    rmse_a: float
    rmse_b: float

    def format(self) -> str:
        return (
            f"rmse {self.rmse_a:.3f} -> {self.rmse_b:.3f} mm "
            f"({self.rmse_change * 100.0:+.1f}%), "
            f"std change {self.std_change * 100.0:+.1f}%"
        )


def compare_reports(a: ErrorReport, b: ErrorReport) -> ImprovementSummary:
    """Relative RMSE and std change from report ``a`` to report ``b``."""
    rmse_change = (b.rmse - a.rmse) / a.rmse if a.rmse != 0 else 0.0
    std_change = (b.std - a.std) / a.std if a.std != 0 else 0.0
    return ImprovementSummary(rmse_change, std_change, a.mean, b.mean, a.rmse, b.rmse)


def report_to_json_dict(report: ErrorReport) -> dict:
    return {
        "mean_mm": report.mean,
        "std_mm": report.std,
        "rmse_mm": report.rmse,
        "count": report.count,
        "note": "population statistics: rmse^2 = mean^2 + std^2",
    }


def write_report_csv(path, report: ErrorReport) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("stat,value\n")
        fh.write(f"mean_mm,{report.mean:.9g}\n")
        fh.write(f"std_mm,{report.std:.9g}\n")
        fh.write(f"rmse_mm,{report.rmse:.9g}\n")
        fh.write(f"count,{report.count}\n")
