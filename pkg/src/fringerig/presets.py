"""Standard desk-scale rig and scenes used by the bundled configs and tests.

The rig keeps the camera at the origin looking down +z; the projector sits
150 mm to the camera's right, aimed at the working point (0, 0, 500). With an
18 px fringe pitch this gives 54-65 mm of depth per fringe period across the
working volume, so a 100 mm sphere stays inside one period of its nearest
reference plane.
"""

from __future__ import annotations

import numpy as np

from .geometry import CalibrationData, Intrinsics, look_at_extrinsics
from .patterns import FringeSpec
from .simulator import Plane, Scene, Sphere

DEFAULT_PITCH = 18.0
CAPTURE_RATE_HZ = 120.0
STAGE_DIRECTION = (1.0, 0.0, 0.0)

SPHERE_RADIUS_MM = 50.0
SPHERE_CENTER = (0.0, 0.0, 500.0)
SPHERE_Z_MIN = 446.0

TILTED_THETA_DEG = 10.0
TILTED_Z_MIN = 460.0
TILTED_FLAT_Z_MIN = 451.5


def standard_rig() -> CalibrationData:
    """Desk-scale camera/projector pair: 640x400 camera, 456x570 projector."""
    return CalibrationData(
        camera=Intrinsics(fx=1400.0, fy=1400.0, cx=320.0, cy=200.0),
        projector=Intrinsics(fx=500.0, fy=500.0, cx=228.0, cy=285.0),
        projector_pose=look_at_extrinsics((150.0, 0.0, 0.0), (0.0, 0.0, 500.0)),
        camera_resolution=(640, 400),
        projector_resolution=(456, 570),
    )


def default_fringe_spec(pitch: float = DEFAULT_PITCH) -> FringeSpec:
    return FringeSpec(pitch=pitch)


def sphere_scene() -> Scene:
    """Single 100 mm sphere centered on the optical axis at 500 mm."""
    return Scene(
        objects=(Sphere(SPHERE_CENTER, SPHERE_RADIUS_MM, albedo=0.9),),
        ambient=0.05,
    )


def tilted_pair_scene(theta_deg: float = TILTED_THETA_DEG) -> Scene:
    """Two spheres on a backdrop plane tilted about the camera y axis.

    The backdrop depth trends by ~47 mm across the field of view, which
    overruns one fringe period of a frontal reference plane; a reference
    rotated by the same angle stays within a period everywhere.
    """
    tan_t = float(np.tan(np.deg2rad(theta_deg)))
    z0 = 505.0
    # backdrop z(x) = z0 + x * tan(theta):  normal . p = offset
    backdrop = Plane(normal=(-tan_t, 0.0, 1.0), offset=z0, albedo=0.85)
    radius = 20.0
    spheres = []
    for x in (-65.0, 65.0):
        surface_z = z0 + x * tan_t
        spheres.append(Sphere((x, 0.0, surface_z - radius), radius, albedo=0.9))
    return Scene(objects=(*spheres, backdrop), ambient=0.05)
