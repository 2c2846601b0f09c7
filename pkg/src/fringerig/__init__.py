"""Motion-compensated three-step phase-shifting profilometry toolkit.

A library plus CLI for reconstructing depth from three sinusoidal fringe
images captured by a camera/projector rig riding a linear stage, including
encoder-driven correction of the motion-induced pixel-mismatch and
phase-shift errors, and a ray-casting simulator that provides exact ground
truth for end-to-end verification.
"""

from .errors import (
    CalibrationError,
    DegenerateInput,
    DegeneratePhaseShift,
    DegenerateProjection,
    DimensionMismatch,
    EmptyInput,
    FileFormatError,
    FringeRigError,
    GrazingPlane,
    OutOfTrajectory,
    SceneError,
    SingularGeometry,
)
from .geometry import (
    CalibrationData,
    Extrinsics,
    Intrinsics,
    ProjectionMatrix,
    compose_projection,
    fit_plane,
    look_at_extrinsics,
    pixel_jacobian,
    project,
    triangulate,
)
from .metrics import ErrorReport, SphereFit, compare_reports, error_report, fit_sphere
from .motion import (
    FrameTriple,
    PipelineConfig,
    RoundDiagnostics,
    corrected_wrapped_phase_general,
    corrected_wrapped_phase_uniform,
    run_pipeline,
)
from .patterns import FringeSpec, absolute_phase, pattern_intensity, rasterize_pattern
from .psp import (
    PointCloud,
    ReferencePlane,
    WrappedPhaseMap,
    build_reference_plane,
    fringe_order,
    min_phase_map,
    reconstruct,
    unwrap,
    wrapped_phase_conventional,
)
from .simulator import (
    GroundTruth,
    Plane,
    Scene,
    Sphere,
    Trajectory,
    TriangleMesh,
    make_encoder_log,
    render_frame,
    render_triple,
    trapezoidal_trajectory,
    uniform_trajectory,
)

__version__ = "0.1.0"
