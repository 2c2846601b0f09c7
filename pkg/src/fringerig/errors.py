"""Exception types raised by the fringerig library."""


class FringeRigError(Exception):
    """Base class for all fringerig errors."""


class DegenerateProjection(FringeRigError):
    """Projection scale factor is (near) zero: the point lies on the camera plane."""


class SingularGeometry(FringeRigError):
    """Triangulation system is ill-conditioned, e.g. near-parallel rays."""


class DegenerateInput(FringeRigError):
    """Input point set is too small or geometrically degenerate for the fit."""


class DimensionMismatch(FringeRigError):
    """Image or map operands do not share the same shape."""


class GrazingPlane(FringeRigError):
    """A camera ray is (near) parallel to the reference plane."""


class OutOfTrajectory(FringeRigError):
    """Requested time lies outside the sampled trajectory domain."""


class DegeneratePhaseShift(FringeRigError):
    """Phase shifts make the three-step system unsolvable."""


class EmptyInput(FringeRigError):
    """An operation that needs data received an empty collection."""


class CalibrationError(FringeRigError):
    """Calibration file is malformed; the message names the offending field."""


class SceneError(FringeRigError):
    """Scene description is malformed; the message names the offending field."""


class FileFormatError(FringeRigError):
    """An image, point-cloud, or CSV file could not be parsed."""
