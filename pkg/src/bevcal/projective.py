"""Plane-to-plane homographies: representation, DLT estimation, application.

A homography is stored as a canonical representative of its scale
equivalence class: unit Frobenius norm with the largest-magnitude element
positive. Frame tags (``world``, ``ori``, ``bev``, ``ori_f``, ``bev_f``)
are carried on every matrix and checked at composition time, so a
homography applied in the wrong direction fails loudly instead of
producing silently wrong coordinates.

Conventions: ``Homography(src_frame=b, dst_frame=a)`` maps points of
frame ``b`` to frame ``a``; composition ``compose(a, b)`` applies ``b``
first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateConfiguration,
    FrameMismatch,
    NumericalFailure,
    PointAtInfinity,
    SingularMatrix,
    TooFewPoints,
)

FRAMES = ("world", "ori", "bev", "ori_f", "bev_f")

_DET_TOL = 1e-12
_W_TOL = 1e-12
_COINCIDENCE_TOL = 1e-9
_COLLINEARITY_TOL = 1e-9
_SV_GAP_TOL = 1e-12


@dataclass(frozen=True)
class PlanePoint:
    """A finite 2D point in some plane (meters in world, pixels in images)."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"plane point must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def canonicalize_matrix(m: np.ndarray) -> np.ndarray:
    """Scale-fix a 3x3 matrix: unit Frobenius norm, largest-|.| element positive.

    Acts as a projection: applying it to an already-canonical matrix
    returns it bit-for-bit unchanged, so equality tests on canonical
    matrices are deterministic.
    """
    m = np.array(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    norm = float(np.linalg.norm(m))
    if norm < _DET_TOL:
        raise SingularMatrix("matrix is numerically zero")
    if abs(norm - 1.0) > 1e-12:
        m = m / norm
    flat = m.ravel()
    lead = int(np.argmax(np.abs(flat)))  # first max in row-major order
    if flat[lead] < 0.0:
        m = -m
    return m


@dataclass(frozen=True)
class Homography:
    """Canonical 3x3 projective map between two tagged planes."""

    m: np.ndarray
    src_frame: str
    dst_frame: str

    def __post_init__(self) -> None:
        if self.src_frame not in FRAMES or self.dst_frame not in FRAMES:
            raise ValueError(
                f"unknown frame tag in ({self.src_frame!r}, {self.dst_frame!r}); "
                f"expected one of {FRAMES}"
            )
        m = canonicalize_matrix(self.m)
        if abs(float(np.linalg.det(m))) <= _DET_TOL:
            raise SingularMatrix(
                f"homography {self.src_frame}->{self.dst_frame} is singular"
            )
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Homography):
            return NotImplemented
        return (
            self.src_frame == other.src_frame
            and self.dst_frame == other.dst_frame
            and np.array_equal(self.m, other.m)
        )

    def __hash__(self) -> int:
        return hash((self.src_frame, self.dst_frame, self.m.tobytes()))

    @staticmethod
    def identity(src_frame: str, dst_frame: str) -> Homography:
        return Homography(np.eye(3), src_frame, dst_frame)


@dataclass(frozen=True)
class CorrespondencePair:
    world: PlanePoint
    image: PlanePoint
    label: str | None = None


@dataclass(frozen=True)
class CorrespondenceSet:
    """Paired world-plane (meters) and image-pixel landmarks."""

    pairs: tuple[CorrespondencePair, ...]

    def __init__(self, pairs) -> None:
        object.__setattr__(self, "pairs", tuple(pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def world_points(self) -> np.ndarray:
        return np.array([[p.world.x, p.world.y] for p in self.pairs], dtype=float)

    def image_points(self) -> np.ndarray:
        return np.array([[p.image.x, p.image.y] for p in self.pairs], dtype=float)


@dataclass(frozen=True)
class ErrorReport:
    """Per-pair pixel residuals of a calibration, plus RMS and max."""

    residuals: tuple[float, ...]
    rms: float
    max: float


def _check_distinct(points: np.ndarray, what: str) -> None:
    n = len(points)
    if n < 2:
        return
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    iu = np.triu_indices(n, k=1)
    if np.any(dist[iu] < _COINCIDENCE_TOL):
        i, j = iu[0][int(np.argmin(dist[iu]))], iu[1][int(np.argmin(dist[iu]))]
        raise DegenerateConfiguration(
            f"{what} points {i} and {j} coincide within {_COINCIDENCE_TOL}"
        )


def hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform taking a point set to zero centroid, mean distance sqrt(2).

    Returns the 3x3 transform T such that T @ [x, y, 1]^T is normalized.
    """
    centroid = points.mean(axis=0)
    mean_dist = float(np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean())
    if mean_dist < _COINCIDENCE_TOL:
        raise DegenerateConfiguration("all points coincide; cannot normalize")
    s = math.sqrt(2.0) / mean_dist
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def dlt_design_matrix(world: np.ndarray, image: np.ndarray) -> np.ndarray:
    """Assemble the 2n x 9 linear system for H mapping world -> image."""
    n = len(world)
    a = np.zeros((2 * n, 9), dtype=float)
    x, y = world[:, 0], world[:, 1]
    u, v = image[:, 0], image[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v
    return a


def _apply_similarity(t: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points * t[0, 0] + t[:2, 2]


def estimate_homography_dlt(c: CorrespondenceSet) -> Homography:
    """Estimate the canonical world->ori homography by normalized DLT.

    Both point sets are Hartley-normalized (zero centroid, mean distance
    sqrt(2)) before the 2n x 9 system is assembled; the solution is the
    right singular vector of the smallest singular value, denormalized
    afterwards. Overdetermined systems are solved in the least-squares
    (algebraic error) sense.

    Raises:
        TooFewPoints: fewer than 4 pairs.
        DegenerateConfiguration: coincident points, or world points all
            collinear (smallest singular value of the centered world
            matrix <= 1e-9).
        NumericalFailure: the two smallest singular values of the design
            matrix are separated by less than 1e-12, i.e. the solution
            is ambiguous.
    """
    n = len(c)
    if n < 4:
        raise TooFewPoints(f"need at least 4 correspondences, got {n}")
    world = c.world_points()
    image = c.image_points()
    _check_distinct(world, "world")
    _check_distinct(image, "image")

    centered = world - world.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= _COLLINEARITY_TOL:
        raise DegenerateConfiguration(
            f"world points are collinear (smallest singular value {sv[-1]:.3e})"
        )

    t_world = hartley_normalization(world)
    t_image = hartley_normalization(image)
    design = dlt_design_matrix(
        _apply_similarity(t_world, world), _apply_similarity(t_image, image)
    )
    _, s, vh = np.linalg.svd(design, full_matrices=True)
    s_full = np.zeros(9)
    s_full[: len(s)] = s  # implicit zeros for under-square systems
    if s_full[-2] - s_full[-1] < _SV_GAP_TOL:
        raise NumericalFailure(
            "ambiguous DLT solution: smallest singular values "
            f"{s_full[-1]:.3e} and {s_full[-2]:.3e} are not separated"
        )
    h_norm = vh[-1].reshape(3, 3)

    # Analytic inverse of the image-side similarity avoids a matrix solve.
    s_img = t_image[0, 0]
    t_image_inv = np.array(
        [
            [1.0 / s_img, 0.0, -t_image[0, 2] / s_img],
            [0.0, 1.0 / s_img, -t_image[1, 2] / s_img],
            [0.0, 0.0, 1.0],
        ]
    )
    h = t_image_inv @ h_norm @ t_world
    try:
        return Homography(h, src_frame="world", dst_frame="ori")
    except SingularMatrix as exc:
        # e.g. all image points collinear: the best algebraic fit is rank-2
        raise DegenerateConfiguration(f"estimated homography is singular: {exc}") from exc


def apply(h: Homography, p: PlanePoint) -> PlanePoint:
    """Map a point through the homography, homogenizing the result.

    Raises PointAtInfinity when the projective denominator underflows.
    """
    m = h.m
    w = m[2, 0] * p.x + m[2, 1] * p.y + m[2, 2]
    if abs(w) <= _W_TOL:
        raise PointAtInfinity(f"({p.x}, {p.y}) maps to infinity under {h.src_frame}->{h.dst_frame}")
    x = (m[0, 0] * p.x + m[0, 1] * p.y + m[0, 2]) / w
    y = (m[1, 0] * p.x + m[1, 1] * p.y + m[1, 2]) / w
    return PlanePoint(x, y)


def apply_array(h: Homography, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`apply` on an (n, 2) array; infinities become NaN rows."""
    points = np.asarray(points, dtype=float)
    m = h.m
    w = m[2, 0] * points[:, 0] + m[2, 1] * points[:, 1] + m[2, 2]
    out = np.empty_like(points)
    finite = np.abs(w) > _W_TOL
    wf = np.where(finite, w, 1.0)
    out[:, 0] = (m[0, 0] * points[:, 0] + m[0, 1] * points[:, 1] + m[0, 2]) / wf
    out[:, 1] = (m[1, 0] * points[:, 0] + m[1, 1] * points[:, 1] + m[1, 2]) / wf
    out[~finite] = np.nan
    return out


def compose(a: Homography, b: Homography) -> Homography:
    """Chain two homographies: ``b`` first, then ``a``.

    Frames must agree: ``b.dst_frame == a.src_frame``. Realizes
    H^bev_ori = H^bev_world . H^world_ori.
    """
    if b.dst_frame != a.src_frame:
        raise FrameMismatch(
            f"cannot compose {a.src_frame}->{a.dst_frame} after {b.src_frame}->{b.dst_frame}"
        )
    return Homography(a.m @ b.m, src_frame=b.src_frame, dst_frame=a.dst_frame)


def invert(h: Homography) -> Homography:
    """Matrix inverse with frames swapped."""
    det = float(np.linalg.det(h.m))
    if abs(det) <= _DET_TOL:
        raise SingularMatrix(f"homography {h.src_frame}->{h.dst_frame} is singular")
    return Homography(np.linalg.inv(h.m), src_frame=h.dst_frame, dst_frame=h.src_frame)


def reprojection_report(h: Homography, c: CorrespondenceSet) -> ErrorReport:
    """Pixel residuals of mapping each world point and comparing to its image point.

    A pair whose world point maps to infinity is reported as an infinite
    residual rather than raising.
    """
    if h.src_frame != "world" or h.dst_frame != "ori":
        raise FrameMismatch(
            f"reprojection expects a world->ori homography, got {h.src_frame}->{h.dst_frame}"
        )
    residuals = []
    for pair in c.pairs:
        try:
            projected = apply(h, pair.world)
        except PointAtInfinity:
            residuals.append(math.inf)
            continue
        residuals.append(
            math.hypot(projected.x - pair.image.x, projected.y - pair.image.y)
        )
    if residuals:
        rms = math.sqrt(sum(r * r for r in residuals) / len(residuals))
        worst = max(residuals)
    else:
        rms = 0.0
        worst = 0.0
    return ErrorReport(residuals=tuple(residuals), rms=rms, max=worst)


# ── JSON wire format (shared by CLI and calibration service) ─────────


def homography_to_dict(h: Homography) -> dict:
    return {"src": h.src_frame, "dst": h.dst_frame, "m": h.m.tolist()}


def homography_from_dict(doc: dict) -> Homography:
    return Homography(np.array(doc["m"], dtype=float), doc["src"], doc["dst"])


def save_homography(h: Homography, path: str | Path) -> None:
    Path(path).write_text(json.dumps(homography_to_dict(h), indent=2) + "\n")


def load_homography(path: str | Path) -> Homography:
    return homography_from_dict(json.loads(Path(path).read_text()))


def correspondences_to_dict(c: CorrespondenceSet) -> dict:
    pairs = []
    for p in c.pairs:
        entry: dict = {"world": [p.world.x, p.world.y], "image": [p.image.x, p.image.y]}
        if p.label is not None:
            entry["label"] = p.label
        pairs.append(entry)
    return {"pairs": pairs}


def correspondences_from_dict(doc: dict) -> CorrespondenceSet:
    pairs = []
    for entry in doc["pairs"]:
        pairs.append(
            CorrespondencePair(
                world=PlanePoint(*map(float, entry["world"])),
                image=PlanePoint(*map(float, entry["image"])),
                label=entry.get("label"),
            )
        )
    return CorrespondenceSet(pairs)


def load_correspondences(path: str | Path) -> CorrespondenceSet:
    return correspondences_from_dict(json.loads(Path(path).read_text()))


def save_correspondences(c: CorrespondenceSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(correspondences_to_dict(c), indent=2) + "\n")
