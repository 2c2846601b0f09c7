"""Encoder-driven correction of motion-induced errors in three-step sets.

Rig travel between the three exposures causes two distinct errors at each
camera pixel: the same scene point lands on different pixels in the first and
third frames (the mismatch problem), and the effective phase shift deviates
from the nominal 2*pi/3. Both are predicted from the encoder displacement and
the pinhole Jacobians evaluated at a coarse per-pixel reconstruction, then
removed: the first by integer re-fetching of the first/third images relative
to the second (reference) frame, the second by solving the three-step system
with per-pixel shifts. The inversion is exact, not a small-error
approximation.

Sign convention: the corrected fetch positions are ``u - e12`` for the first
frame and ``u + e32`` for the third, with displacements taken as
``direction * (d2 - d1)`` and ``direction * (d3 - d2)``. This matches a rig
whose encoder/direction product measures the apparent scene travel in the
camera frame. ``sign_flip`` negates both displacements; it is enabled by
default because this package's simulator models rig travel by translating the
scene the opposite way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePhaseShift, DimensionMismatch
from .geometry import CalibrationData, ProjectionMatrix, pixel_jacobian_map
from .patterns import TWO_PI, DEFAULT_SHIFT
from . import psp
from .psp import (
    DEFAULT_MODULATION_THRESHOLD,
    PointCloud,
    WrappedPhaseMap,
    wrapped_phase_conventional,
)

_SHIFT_TOL = 1e-6


@dataclass(frozen=True)
class FrameTriple:
    """Three fringe images with capture times (s) and encoder readings (mm)."""

    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    t1: float
    t2: float
    t3: float
    d1: float
    d2: float
    d3: float

    def __post_init__(self):
        if not (self.I1.shape == self.I2.shape == self.I3.shape):
            raise DimensionMismatch("fringe images must share the same shape")
        if not (self.t1 < self.t2 < self.t3):
            raise ValueError("capture times must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return self.I1.shape


@dataclass
class PixelErrorMaps:
    """Integer pixel disparities of frames 1 and 3 relative to frame 2."""

    e12_u: np.ndarray
    e12_v: np.ndarray
    e32_u: np.ndarray
    e32_v: np.ndarray
    defined: np.ndarray


@dataclass
class PhaseShiftErrorMaps:
    """Per-pixel phase-shift deviations (rad) for the two frame pairs."""

    e12: np.ndarray
    e32: np.ndarray
    defined: np.ndarray


def displacement_between(trajectory, t_a: float, t_b: float, direction=None) -> np.ndarray:
    """World displacement vector ``direction * (d(t_b) - d(t_a))``.

    ``direction`` defaults to the trajectory's own stage axis.
    """
    r = trajectory.direction if direction is None else np.asarray(direction, dtype=float)
    return r * (trajectory.displacement(t_b) - trajectory.displacement(t_a))


def _nearest_defined_donor(defined: np.ndarray, radius: int) -> np.ndarray:
    """Flat index of the nearest defined pixel within ``radius`` (Chebyshev).

    Returns -1 where no donor exists. Propagation order is fixed, so results
    are deterministic.
    """
    h, w = defined.shape
    donor = np.full((h, w), -1, dtype=np.int64)
    donor[defined] = np.flatnonzero(defined)
    shifts = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))
    for _ in range(radius):
        if np.all(donor >= 0):
            break
        updated = donor.copy()
        for dj, di in shifts:
            cand = np.full((h, w), -1, dtype=np.int64)
            src = donor[max(dj, 0) : h + min(dj, 0), max(di, 0) : w + min(di, 0)]
            cand[max(-dj, 0) : h + min(-dj, 0), max(-di, 0) : w + min(-di, 0)] = src
            take = (updated < 0) & (cand >= 0)
            updated[take] = cand[take]
        donor = updated
    return donor


def _fill_from_donor(channel: np.ndarray, donor: np.ndarray) -> np.ndarray:
    out = np.zeros_like(channel)
    have = donor >= 0
    out[have] = channel.reshape(-1)[donor[have]]
    return out


def camera_pixel_errors(
    camC: ProjectionMatrix,
    coarse: PointCloud,
    delta12: np.ndarray,
    delta32: np.ndarray,
    fill_radius: int = 5,
) -> PixelErrorMaps:
    """Integer pixel errors ``round(J @ delta)`` from the camera Jacobian.

    The Jacobian is evaluated at each pixel's coarse world point. Pixels
    without a coarse point inherit the error of the nearest coarse pixel
    within ``fill_radius``; beyond that they are left undefined and will be
    discarded downstream.
    """
    J = pixel_jacobian_map(camC, coarse.points)
    e12 = np.einsum("hwij,j->hwi", J, np.asarray(delta12, dtype=float))
    e32 = np.einsum("hwij,j->hwi", J, np.asarray(delta32, dtype=float))
    donor = _nearest_defined_donor(coarse.valid, fill_radius)
    channels = [
        _fill_from_donor(np.where(coarse.valid, c, 0.0), donor)
        for c in (e12[..., 0], e12[..., 1], e32[..., 0], e32[..., 1])
    ]
    rounded = [np.round(c).astype(np.int32) for c in channels]
    return PixelErrorMaps(*rounded, defined=donor >= 0)


def correct_camera_pixels(
    triple: FrameTriple, errors: PixelErrorMaps
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Re-fetch frames 1 and 3 at their corrected pixel positions.

    ``I1c(u, v) = I1(u - e12_u, v - e12_v)`` and
    ``I3c(u, v) = I3(u + e32_u, v + e32_v)``; the second frame is the
    reference and stays untouched. Returns ``(I1c, I3c, discarded)`` where
    discarded marks pixels whose fetch left the image or whose error was
    undefined.
    """
    h, w = triple.shape
    jj, ii = np.mgrid[0:h, 0:w]
    src1_c = ii - errors.e12_u
    src1_r = jj - errors.e12_v
    src3_c = ii + errors.e32_u
    src3_r = jj + errors.e32_v
    in1 = (src1_c >= 0) & (src1_c < w) & (src1_r >= 0) & (src1_r < h)
    in3 = (src3_c >= 0) & (src3_c < w) & (src3_r >= 0) & (src3_r < h)
    I1c = triple.I1[src1_r.clip(0, h - 1), src1_c.clip(0, w - 1)]
    I3c = triple.I3[src3_r.clip(0, h - 1), src3_c.clip(0, w - 1)]
    discarded = ~(in1 & in3 & errors.defined)
    return I1c, I3c, discarded


def phase_shift_errors(
    projC: ProjectionMatrix,
    coarse: PointCloud,
    delta12: np.ndarray,
    delta32: np.ndarray,
    pitch: float,
    fill_radius: int = 5,
) -> PhaseShiftErrorMaps:
    """Phase-shift deviations ``(2*pi/pitch) * (J_u @ delta)`` in radians.

    Uses the u row of the projector Jacobian only, since the fringes vary
    along the projector's u axis. Continuous values, no rounding.
    """
    Ju = pixel_jacobian_map(projC, coarse.points)[..., 0, :]
    scale = TWO_PI / pitch
    e12 = scale * np.einsum("hwj,j->hw", Ju, np.asarray(delta12, dtype=float))
    e32 = scale * np.einsum("hwj,j->hw", Ju, np.asarray(delta32, dtype=float))
    donor = _nearest_defined_donor(coarse.valid, fill_radius)
    e12 = _fill_from_donor(np.where(coarse.valid, e12, 0.0), donor)
    e32 = _fill_from_donor(np.where(coarse.valid, e32, 0.0), donor)
    return PhaseShiftErrorMaps(e12, e32, defined=donor >= 0)


def _solve_three_step(I1, I2, I3, delta1, delta3):
    """Exact per-pixel solve of the shifted three-step system.

    Returns (phi, modulation). The determinant factor is positive for shifts
    in (0, pi), making the four-quadrant arctangent exact.
    """
    A1 = I3 - I2
    A2 = I2 - I1
    A3 = I1 - I3
    c1, s1 = np.cos(delta1), np.sin(delta1)
    c3, s3 = np.cos(delta3), np.sin(delta3)
    num = A1 * c1 + A2 * c3 + A3
    den = -A1 * s1 + A2 * s3
    phi = np.arctan2(num, den)
    D = (1.0 - c1) * s3 + s1 * (1.0 - c3)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (A1 * s1 - A2 * s3) / -D
        b = (A1 * (1.0 - c1) + A2 * (1.0 - c3)) / -D
    modulation = np.hypot(a, b)
    return phi, modulation


def corrected_wrapped_phase_general(
    I1c: np.ndarray,
    I2: np.ndarray,
    I3c: np.ndarray,
    delta1: np.ndarray,
    delta3: np.ndarray,
    modulation_threshold: float = DEFAULT_MODULATION_THRESHOLD,
) -> WrappedPhaseMap:
    """Wrapped phase with independent per-pixel shifts for frames 1 and 3.

    ``delta1``/``delta3`` are the corrected shifts (nominal plus the
    motion-induced deviation). Reduces exactly to the conventional formula
    when both equal 2*pi/3.

    Raises
    ------
    DegeneratePhaseShift
        When any pixel's shifts make the system unsolvable: a shift within
        1e-6 of zero, or shifts summing to within 1e-6 of 2*pi.
    """
    if not (I1c.shape == I2.shape == I3c.shape == delta1.shape == delta3.shape):
        raise DimensionMismatch("images and shift maps must share the same shape")
    d1 = np.asarray(delta1, dtype=float)
    d3 = np.asarray(delta3, dtype=float)
    bad = (
        (np.abs(d1) < _SHIFT_TOL)
        | (np.abs(d3) < _SHIFT_TOL)
        | (np.abs(d1 + d3 - TWO_PI) < _SHIFT_TOL)
    )
    if np.any(bad):
        raise DegeneratePhaseShift("phase shifts make the three-step system unsolvable")
    phi, modulation = _solve_three_step(I1c, I2, I3c, d1, d3)
    return WrappedPhaseMap(phi, modulation, modulation >= modulation_threshold)


def corrected_wrapped_phase_uniform(
    I1c: np.ndarray,
    I2: np.ndarray,
    I3c: np.ndarray,
    eps: np.ndarray,
    modulation_threshold: float = DEFAULT_MODULATION_THRESHOLD,
) -> WrappedPhaseMap:
    """Wrapped phase under a single shared shift error per pixel.

    Valid when the motion is uniform enough that the two pair errors agree.
    Reduces exactly to the conventional formula at ``eps = 0``.

    Raises
    ------
    DegeneratePhaseShift
        Where ``sqrt(3)*cos(eps) - sin(eps)`` vanishes (eps near pi/3 + n*pi).
    """
    if not (I1c.shape == I2.shape == I3c.shape == eps.shape):
        raise DimensionMismatch("images and shift-error map must share the same shape")
    e = np.asarray(eps, dtype=float)
    ce, se = np.cos(e), np.sin(e)
    factor = np.sqrt(3.0) * ce - se
    if np.any(np.abs(factor) < _SHIFT_TOL):
        raise DegeneratePhaseShift("shift error near pi/3 + n*pi is unresolvable")
    num = (2.0 + ce + np.sqrt(3.0) * se) * (I1c - I3c)
    den = factor * (2.0 * I2 - I1c - I3c)
    phi = np.arctan2(num, den)
    delta = DEFAULT_SHIFT + e
    _, modulation = _solve_three_step(I1c, I2, I3c, delta, delta)
    return WrappedPhaseMap(phi, modulation, modulation >= modulation_threshold)


# ---------------------------------------------------------------------------
# Iterative pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Knobs of the reconstruction pipeline.

    ``mode`` is ``"uniform"`` (one shared shift error per pixel, taken from
    the 3-2 pair), ``"general"`` (independent pair errors, for accelerating
    motion), or ``"conventional"`` (no correction). ``iterations`` is the
    number of correction rounds; each round re-evaluates the Jacobians at the
    previous round's points.
    """

    z_min_mm: float
    iterations: int = 2
    mode: str = "uniform"
    theta_deg: float = 0.0
    theta_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    lambda_px: float = 18.0
    sign_flip: bool = True
    modulation_threshold: float = DEFAULT_MODULATION_THRESHOLD
    neighbor_fill_px: int = 5

    def __post_init__(self):
        if self.mode not in ("uniform", "general", "conventional"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.z_min_mm <= 0:
            raise ValueError("z_min_mm must be positive")


@dataclass
class RoundDiagnostics:
    """Per-round convergence record.

    ``rmse_mm`` is the RMS 3-D movement of points shared with the previous
    round (0 for the conventional round); ``discarded_px`` counts pixels lost
    to out-of-range fetches or undefined errors.
    """

    round_index: int
    rmse_mm: float
    discarded_px: int


def write_diagnostics_csv(path, diagnostics: list[RoundDiagnostics]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("round,rmse_mm,discarded_px\n")
        for d in diagnostics:
            fh.write(f"{d.round_index},{d.rmse_mm:.9g},{d.discarded_px}\n")


def _round_delta_rmse(cloud: PointCloud, previous: PointCloud) -> float:
    both = cloud.valid & previous.valid
    if not np.any(both):
        return 0.0
    diff = cloud.points[both] - previous.points[both]
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def run_pipeline(
    triple: FrameTriple,
    calibration: CalibrationData,
    direction,
    config: PipelineConfig,
) -> tuple[PointCloud, list[RoundDiagnostics]]:
    """Full reconstruction: conventional pass, then correction rounds.

    The conventional reconstruction provides the coarse per-pixel points for
    the first round's Jacobians; every later round uses the previous round's
    points. Returns the final cloud and one diagnostics entry per round
    (round 0 is the conventional pass).
    """
    r_hat = np.asarray(direction, dtype=float)
    pitch = config.lambda_px
    plane = psp.build_reference_plane(
        calibration,
        config.z_min_mm,
        np.deg2rad(config.theta_deg),
        config.theta_axis,
    )
    min_phase = psp.min_phase_map(calibration, plane, pitch)

    wrapped = wrapped_phase_conventional(
        triple.I1, triple.I2, triple.I3, config.modulation_threshold
    )
    cloud = _unwrap_and_reconstruct(wrapped, min_phase, calibration, pitch)
    diagnostics = [RoundDiagnostics(0, 0.0, 0)]

    rounds = 0 if config.mode == "conventional" else config.iterations
    if rounds == 0:
        return cloud, diagnostics

    delta12 = r_hat * (triple.d2 - triple.d1)
    delta32 = r_hat * (triple.d3 - triple.d2)
    if config.sign_flip:
        delta12 = -delta12
        delta32 = -delta32

    camC = calibration.camera_matrix
    projC = calibration.projector_matrix
    for round_index in range(1, rounds + 1):
        pix_err = camera_pixel_errors(
            camC, cloud, delta12, delta32, config.neighbor_fill_px
        )
        I1c, I3c, discarded = correct_camera_pixels(triple, pix_err)
        ps_err = phase_shift_errors(
            projC, cloud, delta12, delta32, pitch, config.neighbor_fill_px
        )
        if config.mode == "uniform":
            corrected = corrected_wrapped_phase_uniform(
                I1c, triple.I2, I3c, ps_err.e32, config.modulation_threshold
            )
        else:
            corrected = corrected_wrapped_phase_general(
                I1c,
                triple.I2,
                I3c,
                DEFAULT_SHIFT + ps_err.e12,
                DEFAULT_SHIFT + ps_err.e32,
                config.modulation_threshold,
            )
        mask = corrected.mask & ~discarded
        corrected = WrappedPhaseMap(corrected.phi, corrected.modulation, mask)
        new_cloud = _unwrap_and_reconstruct(corrected, min_phase, calibration, pitch)
        diagnostics.append(
            RoundDiagnostics(
                round_index,
                _round_delta_rmse(new_cloud, cloud),
                int(np.count_nonzero(discarded)),
            )
        )
        cloud = new_cloud
    return cloud, diagnostics


def _unwrap_and_reconstruct(wrapped, min_phase, calibration, pitch) -> PointCloud:
    order = psp.fringe_order(min_phase, wrapped)
    absolute = psp.unwrap(wrapped, order)
    return psp.reconstruct(absolute, wrapped.mask, calibration, pitch)
