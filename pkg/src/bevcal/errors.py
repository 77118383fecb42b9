"""Exception hierarchy for the toolkit.

All domain failures derive from :class:`GeometryError` so callers (CLI,
service) can distinguish data problems from programming errors.
"""


class GeometryError(Exception):
    """Base class for all domain errors raised by this package."""


# ── homography estimation ────────────────────────────────────────────

class TooFewPoints(GeometryError):
    """Fewer than the 4 correspondences required for estimation."""


class DegenerateConfiguration(GeometryError):
    """Correspondences are collinear or coincident; no unique homography."""


class NumericalFailure(GeometryError):
    """The linear system is too ill-conditioned to trust its solution."""


class PointAtInfinity(GeometryError):
    """Projective division underflow: the mapped point has no finite image."""

    def __init__(self, message: str = "point maps to infinity", index: int | None = None):
        super().__init__(message if index is None else f"{message} (index {index})")
        self.index = index


class FrameMismatch(GeometryError):
    """Composition of homographies whose frames do not chain."""


class SingularMatrix(GeometryError):
    """Matrix is not invertible within tolerance."""


# ── camera recovery ──────────────────────────────────────────────────

class VanishingAtInfinity(GeometryError):
    """A world axis is parallel to the image plane; its vanishing point is not finite."""


class ImaginaryFocal(GeometryError):
    """The vanishing-point inner product is non-negative: no real focal length
    exists for this principal point."""


class DegenerateHomography(GeometryError):
    """Homography columns too small to recover extrinsics."""


class BehindPlane(GeometryError):
    """No sign choice places the recovered camera above the road plane."""


class SamplingExhausted(GeometryError):
    """Could not find the requested number of valid camera samples."""


# ── scene synthesis ──────────────────────────────────────────────────

class ProjectionBehindCamera(GeometryError):
    """A 3D point has non-positive depth in the camera frame."""


class PlacementExhausted(GeometryError):
    """Rejection sampling failed to place the requested number of vehicles."""


# ── detection post-processing / evaluation ───────────────────────────

class LengthMismatch(GeometryError):
    """Parallel lists have different lengths."""


class NoGroundTruth(GeometryError):
    """Metrics are undefined on a dataset with zero ground-truth boxes."""
