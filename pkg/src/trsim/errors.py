"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for all trsim errors."""


class NearSingularRotation(SimError):
    """Rotation angle too close to pi for a stable logarithm."""


class InvalidConfig(SimError):
    """Configuration document failed validation."""


class OutOfBounds(SimError):
    """Query point lies outside the world bounds."""


class PathTooShort(SimError):
    """Path does not provide enough length for the requested operation."""


class EmptyStream(SimError):
    """Pose stream contained no samples."""


class NonMonotonicTime(SimError):
    """Pose stream timestamps were not strictly increasing."""


class EmptySubmap(SimError):
    """A submap cylinder captured too few points to localize against."""

    def __init__(self, vertex_id: int, count: int):
        super().__init__(f"submap at vertex {vertex_id} has only {count} points")
        self.vertex_id = vertex_id
        self.count = count


class DegenerateNeighborhood(SimError):
    """Neighborhood covariance is rank-deficient; no normal direction."""


class TooFewCorrespondences(SimError):
    """ICP retained fewer correspondences than the safe minimum."""


class NonFiniteSolution(SimError):
    """ICP normal equations are singular (degenerate scene geometry)."""


class EndOfPath(SimError):
    """Lookahead target passed the final vertex; repeat is complete."""


class LocalizationLost(SimError):
    """Consecutive ICP failures; the vehicle was commanded to stop."""


class IncompleteCoverage(SimError):
    """A teach vertex has no repeat sample close enough to evaluate."""

    def __init__(self, vertex_id: int, closest: float):
        super().__init__(
            f"vertex {vertex_id}: nearest repeat sample {closest:.2f} m away longitudinally"
        )
        self.vertex_id = vertex_id
        self.closest = closest


class MarkerMissed(SimError):
    """No pause event close enough to a marker station."""

    def __init__(self, marker_id: int):
        super().__init__(f"no pause event within range of marker {marker_id}")
        self.marker_id = marker_id


class WrongMode(SimError):
    """Session is not in the mode required by the request."""


class SessionClosed(SimError):
    """Session has been shut down."""
