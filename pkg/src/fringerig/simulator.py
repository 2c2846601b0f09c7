"""Ray-casting simulator of the moving fringe-projection rig.

Renders fringe-image triples with exact per-pixel ground truth (depth and
absolute phase), standing in for hardware captures. Rig travel is modeled by
translating the scene by ``-displacement * direction`` in the world (camera)
frame, which is exactly equivalent to moving the rig and keeps the world frame
attached to the camera.

Rendering is data-parallel over pixel rows; the scene and calibration are
immutable during a render and worker blocks write disjoint output rows, so
results are identical for any thread count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import OutOfTrajectory, SceneError
from .geometry import CalibrationData, project_points
from .motion import FrameTriple
from .patterns import FringeSpec, absolute_phase, pattern_intensity

MASK_MISS = 0
MASK_SHADOW = 1
MASK_LIT = 2

_SHADOW_EPS = 1e-6


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    albedo: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise SceneError("sphere.radius must be positive")

    def translated(self, offset: np.ndarray) -> "Sphere":
        return replace(self, center=self.center + offset)


@dataclass(frozen=True)
class Plane:
    """Infinite plane ``normal . p = offset``."""

    normal: np.ndarray
    offset: float
    albedo: float = 0.9

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise SceneError("plane.normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def translated(self, offset: np.ndarray) -> "Plane":
        return replace(self, offset=self.offset + float(self.normal @ offset))


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    albedo: float = 0.9

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.faces, dtype=int)
        if v.ndim != 2 or v.shape[1] != 3:
            raise SceneError("mesh.vertices must be (N, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise SceneError("mesh.faces must be (M, 3)")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise SceneError("mesh.faces index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def translated(self, offset: np.ndarray) -> "TriangleMesh":
        return replace(self, vertices=self.vertices + offset)


@dataclass(frozen=True)
class Scene:
    objects: tuple
    ambient: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not 0.0 <= self.ambient <= 1.0:
            raise SceneError("ambient must be within [0, 1]")
        for i, obj in enumerate(self.objects):
            if not 0.0 <= obj.albedo <= 1.0:
                raise SceneError(f"objects[{i}].albedo must be within [0, 1]")
            if obj.albedo + self.ambient > 1.0 + 1e-12:
                raise SceneError(f"objects[{i}].albedo + ambient exceeds 1")

    def translated(self, offset: np.ndarray) -> "Scene":
        return Scene(tuple(o.translated(offset) for o in self.objects), self.ambient)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SceneError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("objects"), list):
            raise SceneError("missing 'objects' array")
        if not doc["objects"]:
            raise SceneError("scene has no objects")
        objects = []
        for i, entry in enumerate(doc["objects"]):
            objects.append(_parse_object(entry, i))
        ambient = doc.get("ambient", 0.05)
        if not isinstance(ambient, (int, float)):
            raise SceneError("ambient: non-numeric")
        return cls(tuple(objects), float(ambient))

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_json(fh.read())

    def to_json(self) -> str:
        entries = []
        for obj in self.objects:
            if isinstance(obj, Sphere):
                entries.append(
                    {
                        "type": "sphere",
                        "center": obj.center.tolist(),
                        "radius": obj.radius,
                        "albedo": obj.albedo,
                    }
                )
            elif isinstance(obj, Plane):
                entries.append(
                    {
                        "type": "plane",
                        "normal": obj.normal.tolist(),
                        "offset": obj.offset,
                        "albedo": obj.albedo,
                    }
                )
            else:
                entries.append(
                    {
                        "type": "mesh",
                        "vertices": obj.vertices.tolist(),
                        "faces": obj.faces.tolist(),
                        "albedo": obj.albedo,
                    }
                )
        return json.dumps({"ambient": self.ambient, "objects": entries}, indent=2)


def _parse_object(entry, index):
    where = f"objects[{index}]"
    if not isinstance(entry, dict) or "type" not in entry:
        raise SceneError(f"{where}: missing 'type'")
    kind = entry["type"]
    albedo = entry.get("albedo", 0.9)
    if not isinstance(albedo, (int, float)):
        raise SceneError(f"{where}.albedo: non-numeric")
    try:
        if kind == "sphere":
            return Sphere(entry["center"], float(entry["radius"]), float(albedo))
        if kind == "plane":
            return Plane(entry["normal"], float(entry["offset"]), float(albedo))
        if kind == "mesh":
            return TriangleMesh(entry["vertices"], entry["faces"], float(albedo))
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneError(f"{where}: {exc}") from exc
    raise SceneError(f"{where}.type: unknown object type {kind!r}")


@dataclass(frozen=True)
class Trajectory:
    """Sampled stage travel: displacement in mm along a unit direction."""

    times: np.ndarray
    displacements: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        d = np.asarray(self.displacements, dtype=float)
        r = np.asarray(self.direction, dtype=float)
        if t.ndim != 1 or t.shape != d.shape or t.size < 1:
            raise ValueError("times and displacements must be equal-length 1-D arrays")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if abs(np.linalg.norm(r) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "displacements", d)
        object.__setattr__(self, "direction", r)

    @property
    def domain(self) -> tuple[float, float]:
        return (float(self.times[0]), float(self.times[-1]))

    def displacement(self, t) -> np.ndarray:
        """Piecewise-linear displacement at time ``t`` (scalar or array)."""
        ts = np.asarray(t, dtype=float)
        lo, hi = self.domain
        if np.any(ts < lo) or np.any(ts > hi):
            raise OutOfTrajectory(f"time outside sampled range [{lo}, {hi}]")
        out = np.interp(ts, self.times, self.displacements)
        return float(out) if np.isscalar(t) else out


def uniform_trajectory(speed: float, duration: float, direction=(1.0, 0.0, 0.0)) -> Trajectory:
    """Constant-speed travel starting from rest position zero."""
    times = np.array([0.0, duration])
    return Trajectory(times, speed * times, np.asarray(direction, dtype=float))


def trapezoidal_trajectory(
    peak_speed: float,
    ramp_time: float,
    cruise_time: float,
    direction=(1.0, 0.0, 0.0),
    sample_rate: float = 2000.0,
) -> Trajectory:
    """Ramp up, cruise, ramp down. Densely sampled so linear interpolation
    tracks the quadratic ramps closely."""
    total = 2 * ramp_time + cruise_time
    n = int(np.floor(total * sample_rate)) + 1
    times = np.minimum(np.arange(n) / sample_rate, total)
    if times[-1] < total:
        times = np.append(times, total)
    accel = peak_speed / ramp_time
    d = np.empty_like(times)
    t1, t2 = ramp_time, ramp_time + cruise_time
    ramp_up = times <= t1
    cruise = (times > t1) & (times <= t2)
    ramp_down = times > t2
    d[ramp_up] = 0.5 * accel * times[ramp_up] ** 2
    d_t1 = 0.5 * accel * t1**2
    d[cruise] = d_t1 + peak_speed * (times[cruise] - t1)
    d_t2 = d_t1 + peak_speed * cruise_time
    td = times[ramp_down] - t2
    d[ramp_down] = d_t2 + peak_speed * td - 0.5 * accel * td**2
    return Trajectory(times, d, np.asarray(direction, dtype=float))


@dataclass
class GroundTruth:
    """Exact per-camera-pixel depth (mm), absolute phase (rad), and hit mask.

    Mask values: 0 = no hit, 1 = hit but shadowed from the projector,
    2 = lit hit.
    """

    depth: np.ndarray
    phase: np.ndarray
    mask: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.mask > MASK_MISS

    @property
    def lit(self) -> np.ndarray:
        return self.mask == MASK_LIT

    @property
    def fringe_order(self) -> np.ndarray:
        """Integer fringe order of the true absolute phase."""
        wrapped = np.angle(np.exp(1j * self.phase))
        return np.round((self.phase - wrapped) / (2 * np.pi)).astype(int)


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------


def _intersect_object(obj, origins, dirs):
    """Smallest positive ray parameter per ray, inf where missed."""
    if isinstance(obj, Sphere):
        oc = origins - obj.center
        a = np.einsum("...i,...i->...", dirs, dirs)
        b = 2.0 * np.einsum("...i,...i->...", dirs, oc)
        c = np.einsum("...i,...i->...", oc, oc) - obj.radius**2
        disc = b * b - 4.0 * a * c
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = (-b - sq) / (2.0 * a)
        t1 = (-b + sq) / (2.0 * a)
        t = np.where(t0 > 0, t0, t1)
        return np.where(hit & (t > 0), t, np.inf)
    if isinstance(obj, Plane):
        denom = dirs @ obj.normal
        num = obj.offset - origins @ obj.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        return np.where((np.abs(denom) > 1e-15) & (t > 0), t, np.inf)
    if isinstance(obj, TriangleMesh):
        best = np.full(dirs.shape[:-1], np.inf)
        v = obj.vertices
        for i0, i1, i2 in obj.faces:
            e1 = v[i1] - v[i0]
            e2 = v[i2] - v[i0]
            pvec = np.cross(dirs, e2)
            det = pvec @ e1
            tvec = origins - v[i0]
            qvec = np.cross(tvec, e1)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / det
                u = np.einsum("...i,...i->...", tvec, pvec) * inv
                w = np.einsum("...i,...i->...", dirs, qvec) * inv
                t = (qvec @ e2) * inv
            ok = (
                (np.abs(det) > 1e-15)
                & (u >= 0.0)
                & (w >= 0.0)
                & (u + w <= 1.0)
                & (t > 0)
            )
            best = np.where(ok & (t < best), t, best)
        return best
    raise TypeError(f"unsupported scene object {type(obj)!r}")


def _nearest_hit(scene, origins, dirs):
    """Nearest intersection over all objects: (t, object index) per ray."""
    shape = dirs.shape[:-1]
    best_t = np.full(shape, np.inf)
    best_idx = np.full(shape, -1, dtype=int)
    for idx, obj in enumerate(scene.objects):
        t = _intersect_object(obj, origins, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_idx = np.where(closer, idx, best_idx)
    return best_t, best_idx


def _camera_ray_dirs(calibration: CalibrationData, rows: np.ndarray) -> np.ndarray:
    """Unnormalized ray directions with unit z, so the ray parameter is depth."""
    width, _ = calibration.camera_resolution
    intr = calibration.camera
    u = np.arange(width) + 0.5
    v = rows + 0.5
    x = (u[None, :] - intr.cx - intr.skew * ((v[:, None] - intr.cy) / intr.fy)) / intr.fx
    y = (v[:, None] - intr.cy) / intr.fy
    dirs = np.empty((rows.size, width, 3))
    dirs[..., 0] = x
    dirs[..., 1] = np.broadcast_to(y, x.shape)
    dirs[..., 2] = 1.0
    return dirs


def _render_rows(scene, calibration, spec, step, rows):
    dirs = _camera_ray_dirs(calibration, rows)
    t, idx = _nearest_hit(scene, np.zeros(3), dirs)
    hit = np.isfinite(t)
    t_safe = np.where(hit, t, 1.0)
    points = dirs * t_safe[..., None]

    uv, _scale = project_points(calibration.projector_matrix, points)
    u_p = uv[..., 0]

    # shadow pass: parameter 1 reaches the projector center
    proj_center = calibration.projector_center
    shadow_dirs = proj_center - points
    t_s, _ = _nearest_hit(scene, points, shadow_dirs)
    shadowed = hit & (t_s > _SHADOW_EPS) & (t_s < 1.0 - _SHADOW_EPS)

    albedo = np.zeros(t.shape)
    for i, obj in enumerate(scene.objects):
        albedo[idx == i] = obj.albedo

    image = np.zeros(t.shape)
    lit = hit & ~shadowed
    image[lit] = scene.ambient + albedo[lit] * pattern_intensity(spec, u_p[lit], step)
    image[shadowed] = scene.ambient

    depth = np.where(hit, t, np.nan)
    phase = np.where(hit, absolute_phase(spec.pitch, u_p), np.nan)
    mask = np.full(t.shape, MASK_MISS, dtype=np.uint8)
    mask[shadowed] = MASK_SHADOW
    mask[lit] = MASK_LIT
    return image, depth, phase, mask


def render_frame(
    scene: Scene,
    calibration: CalibrationData,
    spec: FringeSpec,
    step: int,
    displacement: float = 0.0,
    direction=(1.0, 0.0, 0.0),
    threads: int = 1,
) -> tuple[np.ndarray, GroundTruth]:
    """Render one fringe image at the given stage displacement.

    Returns the intensity image and the exact ground truth for every pixel.
    """
    moved = scene
    if displacement != 0.0:
        moved = scene.translated(-displacement * np.asarray(direction, dtype=float))
    width, height = calibration.camera_resolution
    image = np.empty((height, width))
    depth = np.empty((height, width))
    phase = np.empty((height, width))
    mask = np.empty((height, width), dtype=np.uint8)

    def run_block(r0: int, r1: int) -> None:
        rows = np.arange(r0, r1)
        img, dep, pha, msk = _render_rows(moved, calibration, spec, step, rows)
        image[r0:r1] = img
        depth[r0:r1] = dep
        phase[r0:r1] = pha
        mask[r0:r1] = msk

    threads = max(1, int(threads))
    if threads == 1:
        run_block(0, height)
    else:
        block = max(1, -(-height // threads))
        bounds = [(r, min(r + block, height)) for r in range(0, height, block)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: run_block(*b), bounds))
    return image, GroundTruth(depth, phase, mask)


def quantize(values, step: float):
    """Round to the nearest multiple of ``step`` (no-op for step <= 0)."""
    if step <= 0:
        return values
    return np.round(np.asarray(values, dtype=float) / step) * step


def render_triple(
    scene: Scene,
    calibration: CalibrationData,
    spec: FringeSpec,
    trajectory: Trajectory,
    times: tuple[float, float, float],
    quantization: float = 0.0,
    threads: int = 1,
) -> tuple[FrameTriple, GroundTruth]:
    """Render fringe steps 1..3 at the trajectory displacements of ``times``.

    The attached encoder readings are linearly interpolated from the
    trajectory and optionally quantized. The returned ground truth belongs to
    the middle (reference) frame.

    Raises
    ------
    OutOfTrajectory
        If any time falls outside the sampled trajectory domain.
    """
    t1, t2, t3 = times
    if not t1 < t2 < t3:
        raise ValueError("times must be strictly increasing")
    disp = [trajectory.displacement(t) for t in (t1, t2, t3)]
    encoder = [float(quantize(d, quantization)) for d in disp]
    images = []
    gt_mid = None
    for step, d in enumerate(disp, start=1):
        image, gt = render_frame(
            scene, calibration, spec, step, d, trajectory.direction, threads=threads
        )
        images.append(image)
        if step == 2:
            gt_mid = gt
    triple = FrameTriple(
        images[0], images[1], images[2], t1, t2, t3, encoder[0], encoder[1], encoder[2]
    )
    return triple, gt_mid


def make_encoder_log(
    trajectory: Trajectory,
    rate: float,
    quantization: float = 0.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the trajectory at ``rate`` Hz into (times, encoder readings).

    Noise is injected from a seeded generator before quantization, so a fixed
    seed reproduces the log bit-for-bit.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    lo, hi = trajectory.domain
    n = int(np.floor((hi - lo) * rate)) + 1
    times = lo + np.arange(n) / rate
    values = trajectory.displacement(times)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, noise_sigma, size=values.shape)
    values = quantize(values, quantization)
    return times, np.asarray(values)


def apply_image_noise(image: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian sensor noise, clipped to the valid intensity range."""
    if sigma <= 0:
        return image
    return np.clip(image + rng.normal(0.0, sigma, size=image.shape), 0.0, 1.0)
