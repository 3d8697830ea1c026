"""Exception hierarchy shared by the planning pipeline."""


class VTubeError(Exception):
    """Base class for all errors raised by this package."""

    stage = "vtube"


class DomainError(VTubeError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(VTubeError, ValueError):
    """Invalid parameters or inconsistent configuration."""

    stage = "config"


class GeometryError(VTubeError):
    """Degenerate geometric input (disjoint, tangent or nested spheres...)."""

    stage = "corridor"


class PlanningError(VTubeError):
    """The corridor search found no path from start to goal."""

    stage = "corridor"

    def __init__(self, message, explored=0):
        super().__init__(f"{message} (explored {explored} graph nodes)")
        self.explored = explored


class DegenerateSegmentError(VTubeError):
    """A boundary path contains a zero-length segment."""

    stage = "corridor"


class SpatialInfeasibleError(VTubeError):
    """The spatial QP has no solution inside the sphere sequence."""

    stage = "spatial"

    def __init__(self, message, segment=None):
        super().__init__(message)
        self.segment = segment


class LPInfeasibleError(VTubeError):
    """The time-allocation LP is infeasible.

    ``certificate`` holds a Farkas ray ``(u, w)`` with ``u >= 0``,
    ``G.T @ u + E.T @ w = 0`` and ``h @ u < 0``.
    """

    stage = "temporal"

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class LPInternalError(VTubeError):
    """The LP solver reached a state that cannot happen for valid input."""

    stage = "temporal"


class AssemblyError(VTubeError):
    """Inconsistent shapes or provenance when assembling composite objects."""

    stage = "assembly"


class DegenerateSimplexError(VTubeError):
    """A critical region collapsed and cannot be split."""

    stage = "partition"


class BudgetError(VTubeError):
    """Partition recursion exceeded its depth budget."""

    stage = "partition"

    def __init__(self, message, worst_error=float("nan")):
        super().__init__(f"{message} (worst residual error {worst_error:.6g})")
        self.worst_error = worst_error


class FeasibilityHoleError(VTubeError):
    """An infeasible parameter was found strictly inside a feasible region."""

    stage = "partition"


class AssignmentError(VTubeError):
    """A robot start point is not inside the hull of boundary start points."""

    stage = "tube"

    def __init__(self, message, distance=float("nan")):
        super().__init__(f"{message} (distance to hull {distance:.3g} m)")
        self.distance = distance


class IntegrityError(VTubeError):
    """A serialized artifact failed its content-hash or schema check."""

    stage = "io"


class ScenarioError(VTubeError):
    """A scenario file failed validation."""

    stage = "scenario"

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class ReplanError(VTubeError):
    """Replanning failed (sensed dead end)."""

    stage = "replan"
