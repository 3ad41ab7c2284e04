"""Exception hierarchy shared across the workbench.

Every module raises subclasses of WorkbenchError so the CLI can map
failures onto exit codes without inspecting messages.
"""


class WorkbenchError(Exception):
    """Base class for all workbench errors."""


class ConfigError(WorkbenchError):
    """Bad or unknown configuration key/value. CLI exit code 2."""


class MissingInput(WorkbenchError):
    """A required input file or directory is absent. CLI exit code 3."""


class NumericalError(WorkbenchError):
    """Numerical failure (divergence, degenerate system). CLI exit code 4."""


# ---------------------------------------------------------------- geometry
class PointBehindCamera(NumericalError):
    """Projection requested for a point with z <= 0 in the camera frame."""


class DegenerateRays(NumericalError):
    """Triangulation rays are too close to parallel."""


class AllFalse(NumericalError):
    """Distance transform input contains no foreground pixel."""


class BadThresholds(ConfigError):
    """Hysteresis thresholds violate 0 <= low <= high."""


# ---------------------------------------------------------------- synth
class UnknownPrimitive(ConfigError):
    """make_scene received an unknown primitive name."""


class NonPositiveDimension(ConfigError):
    """A primitive dimension was zero or negative."""


class EmptyView(NumericalError):
    """Requested render sees no geometry at all."""


class AsymmetricMatrix(NumericalError):
    """Quadratic shading matrix is not symmetric."""


# ---------------------------------------------------------------- lightcal
class RankDeficientNormals(NumericalError):
    """Normal matrix for light fitting has rank < 3."""


class IllConditioned(NumericalError):
    """Design matrix condition number exceeds the allowed bound."""


class TooFewPlacements(NumericalError):
    """Spatial illumination fit needs more target placements."""


class DegenerateLayout(NumericalError):
    """Target placements are spatially degenerate (rank-deficient design)."""


# ---------------------------------------------------------------- normals
class ShapeMismatch(WorkbenchError):
    """Image stack shapes disagree."""


class NoValidPixels(NumericalError):
    """No pixel has enough lit channels to solve for a normal."""


class DivergenceDetected(NumericalError):
    """Refinement loss increased too many consecutive iterations."""


class NonFiniteLoss(NumericalError):
    """Optimizer encountered a NaN/inf loss value."""


# ---------------------------------------------------------------- integrate
class NzTooSmall(NumericalError):
    """Normals too close to the view plane for depth integration."""


class SolverDiverged(NumericalError):
    """Sparse solver failed to reach the requested residual."""


# ---------------------------------------------------------------- grasp
class RejectionExhausted(NumericalError):
    """Orientation sampling rejected too many draws."""


class ZeroMass(NumericalError):
    """Probability map has zero total mass."""


class WindowOutOfBounds(WorkbenchError):
    """Requested window leaves the image."""


class NoFeasibleGrasp(NumericalError):
    """No pick direction passed the edge/size gates."""


class TooFewEdgePixels(NumericalError):
    """Not enough edge pixels for circle fitting."""


# ---------------------------------------------------------------- pose
class NoCorners(NumericalError):
    """Corner detector found nothing usable."""


class NoOverlap(NumericalError):
    """Silhouettes share too little area to align."""


class EmptyEdges(NumericalError):
    """Edge map is empty; EDT alignment undefined."""


class NoNeighbors(NumericalError):
    """A feature point has no neighbors inside the radius."""


class TooFewCorrespondences(NumericalError):
    """Global registration found too few mutual matches."""


class NoConvergence(NumericalError):
    """Iteration budget exhausted without meeting tolerance."""


# ---------------------------------------------------------------- deform
class DegenerateFace(NumericalError):
    """Mesh face with (near) zero area where a normal is required."""


class TopologyMismatch(WorkbenchError):
    """Meshes expected to share topology do not."""


# ---------------------------------------------------------------- eval
class EmptyMask(WorkbenchError):
    """Statistic requested over an empty pixel mask."""


class EmptyCloud(WorkbenchError):
    """Point cloud operation on an empty cloud."""
