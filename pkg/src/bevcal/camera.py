"""Camera recovery from a calibrated road-plane homography.

A world->image homography H determines a camera only up to the choice of
principal point: given P, the two road-axis vanishing points fix the
focal length, and the scaled columns of K^-1 H yield the rotation and
translation. Every (K, R, t) recovered here reproduces the input
homography, which is exactly the property that makes the family usable
for synthesizing plausible imagery from an uncalibrated camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindPlane,
    DegenerateHomography,
    FrameMismatch,
    ImaginaryFocal,
    ProjectionBehindCamera,
    SamplingExhausted,
    VanishingAtInfinity,
)
from .projective import Homography, PlanePoint, canonicalize_matrix

_AXIS_TOL = 1e-12
_ORTHO_TOL = 1e-9
_REPRODUCTION_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Zero-skew, square-pixel intrinsics: focal length and principal point."""

    f: float
    px: float
    py: float

    def __post_init__(self) -> None:
        if not self.f > 0:
            raise ValueError(f"focal length must be positive, got {self.f}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f, 0.0, self.px], [0.0, self.f, self.py], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Extrinsics:
    """World->camera rigid transform with the camera above the road plane."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.r, dtype=float)
        t = np.array(self.t, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if np.linalg.norm(r.T @ r - np.eye(3)) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(float(np.linalg.det(r)) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        if not self.camera_center_of(r, t)[2] > 0:
            raise ValueError("camera center is not above the road plane")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @staticmethod
    def camera_center_of(r: np.ndarray, t: np.ndarray) -> np.ndarray:
        return -r.T @ t

    def camera_center(self) -> np.ndarray:
        return self.camera_center_of(self.r, self.t)


@dataclass(frozen=True)
class VanishingPair:
    """Images of the world x- and y-axis points at infinity."""

    u: PlanePoint
    v: PlanePoint


def vanishing_points(h: Homography) -> VanishingPair:
    """Vanishing points of the world axes under a world->ori homography.

    U = (h11/h31, h21/h31) and V = (h12/h32, h22/h32). An axis whose
    third-row entry underflows is parallel to the image plane; the error
    names the failing axis (or both).
    """
    if (h.src_frame, h.dst_frame) != ("world", "ori"):
        raise FrameMismatch(
            f"vanishing points need a world->ori homography, got {h.src_frame}->{h.dst_frame}"
        )
    m = h.m
    bad = [axis for axis, col in (("x", 0), ("y", 1)) if abs(m[2, col]) <= _AXIS_TOL]
    if bad:
        raise VanishingAtInfinity(
            f"world {' and '.join(bad)} axis vanishing point(s) at infinity"
        )
    u = PlanePoint(m[0, 0] / m[2, 0], m[1, 0] / m[2, 0])
    v = PlanePoint(m[0, 1] / m[2, 1], m[1, 1] / m[2, 1])
    return VanishingPair(u, v)


def focal_from_vps(vp: VanishingPair, p: PlanePoint) -> float:
    """Focal length in pixels from orthogonal-axis vanishing points.

    f = sqrt(-<U-P, V-P>). The inner product must be negative (the
    orthogonal world axes subtend an obtuse angle at the principal
    point); otherwise this principal point is inconsistent with the
    homography and ImaginaryFocal is raised.
    """
    du = (vp.u.x - p.x, vp.u.y - p.y)
    dv = (vp.v.x - p.x, vp.v.y - p.y)
    dot = du[0] * dv[0] + du[1] * dv[1]
    if dot >= 0:
        raise ImaginaryFocal(
            f"<U-P, V-P> = {dot:.6g} >= 0: no real focal length for P=({p.x}, {p.y})"
        )
    return float(np.sqrt(-dot))


def _nearest_orthonormal_pair(cols: np.ndarray) -> np.ndarray:
    """Closest 3x2 matrix with orthonormal columns (polar factor).

    Preserves the bisector of the two input columns, which keeps the
    recovered rotation symmetric in the two road axes.
    """
    w, _, vt = np.linalg.svd(cols, full_matrices=False)
    return w @ vt


def principal_point_line(h: Homography) -> tuple[float, float, float]:
    """Locus of principal points exactly consistent with h.

    A metric-plane homography constrains the image of the absolute conic
    twice (axis orthogonality and equal axis scales), so with square
    pixels and zero skew the admissible principal points form a line
    A*px + B*py + C = 0, with the focal length determined along it.
    Returns (A, B, C) normalized to unit (A, B).
    """
    h1, h2 = h.m[:, 0], h.m[:, 1]
    # h_i^T w h_j is linear in (a, b, c) = (px, py, f^2 + px^2 + py^2)
    # for w ~ [[1, 0, -a], [0, 1, -b], [-a, -b, c]].
    d1 = h1[0] * h2[0] + h1[1] * h2[1]
    a1 = -(h1[0] * h2[2] + h1[2] * h2[0])
    b1 = -(h1[1] * h2[2] + h1[2] * h2[1])
    g1 = h1[2] * h2[2]
    d2 = (h1[0] ** 2 + h1[1] ** 2) - (h2[0] ** 2 + h2[1] ** 2)
    a2 = -2.0 * (h1[0] * h1[2] - h2[0] * h2[2])
    b2 = -2.0 * (h1[1] * h1[2] - h2[1] * h2[2])
    g2 = h1[2] ** 2 - h2[2] ** 2
    # Eliminate c between the two constraints.
    a = g1 * a2 - g2 * a1
    b = g1 * b2 - g2 * b1
    c = g1 * d2 - g2 * d1
    norm = float(np.hypot(a, b))
    if norm < 1e-30:
        raise DegenerateHomography(
            "principal-point constraints are degenerate for this homography"
        )
    return a / norm, b / norm, c / norm


def _project_onto_line(p: PlanePoint, line: tuple[float, float, float]) -> PlanePoint:
    a, b, c = line
    d = a * p.x + b * p.y + c
    return PlanePoint(p.x - a * d, p.y - b * d)


def recover_extrinsics(h: Homography, k: Intrinsics) -> Extrinsics:
    """Rotation and translation from a world->ori homography and intrinsics.

    Scales the columns of K^-1 H symmetrically (s = 2/(|m1|+|m2|)),
    orthonormalizes the first two columns by polar decomposition, and
    completes the rotation with their cross product. The overall sign is
    chosen so the camera center lands above the road plane.
    """
    k_inv = np.array(
        [
            [1.0 / k.f, 0.0, -k.px / k.f],
            [0.0, 1.0 / k.f, -k.py / k.f],
            [0.0, 0.0, 1.0],
        ]
    )
    m = k_inv @ h.m
    n1 = float(np.linalg.norm(m[:, 0]))
    n2 = float(np.linalg.norm(m[:, 1]))
    if n1 < _AXIS_TOL or n2 < _AXIS_TOL:
        raise DegenerateHomography("homography column too small to recover rotation")
    s = 2.0 / (n1 + n2)
    for sign in (1.0, -1.0):
        r12 = _nearest_orthonormal_pair(sign * s * m[:, :2])
        r3 = np.cross(r12[:, 0], r12[:, 1])
        r = np.column_stack([r12, r3])
        t = sign * s * m[:, 2]
        if Extrinsics.camera_center_of(r, t)[2] > 0:
            return Extrinsics(r, t)
    raise BehindPlane("no sign choice places the camera above the road plane")


def homography_from_camera(k: Intrinsics, e: Extrinsics) -> Homography:
    """Canonical world->ori homography K [r1 r2 t] of a camera."""
    h = k.matrix() @ np.column_stack([e.r[:, 0], e.r[:, 1], e.t])
    return Homography(h, src_frame="world", dst_frame="ori")


def reproduction_residual(h: Homography, k: Intrinsics, e: Extrinsics) -> float:
    """Canonical Frobenius distance between h and the camera's homography."""
    return float(np.linalg.norm(homography_from_camera(k, e).m - h.m))


def project_to_pixels(k: Intrinsics, e: Extrinsics, points: np.ndarray) -> np.ndarray:
    """Full 3x4 projection of (n, 3) world points to (n, 2) pixels.

    Raises ProjectionBehindCamera if any point has non-positive depth.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    cam = points @ e.r.T + e.t
    if np.any(cam[:, 2] <= 0):
        raise ProjectionBehindCamera(
            f"{int((cam[:, 2] <= 0).sum())} point(s) at non-positive depth"
        )
    return np.column_stack(
        [k.f * cam[:, 0] / cam[:, 2] + k.px, k.f * cam[:, 1] / cam[:, 2] + k.py]
    )


def sample_camera_family(
    h: Homography,
    center: PlanePoint,
    radius: float,
    n: int,
    seed: int,
) -> list[tuple[Intrinsics, Extrinsics]]:
    """Sample n cameras consistent with h by drawing principal points.

    Candidate principal points are drawn uniformly from the disc of the
    given radius around `center` (deterministic under `seed`) and then
    projected onto the locus of principal points exactly consistent
    with h (see :func:`principal_point_line`): only there does a
    square-pixel camera reproduce h, which is the whole point of the
    family. Draws whose projected point admits no real focal length, or
    whose recovered camera fails to reproduce h within 1e-6 canonical
    Frobenius, are discarded and redrawn, up to 100*n attempts in total.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    vp = vanishing_points(h)
    line = principal_point_line(h)
    rng = np.random.default_rng(seed)
    cameras: list[tuple[Intrinsics, Extrinsics]] = []
    for _ in range(100 * n):
        u1, u2 = rng.random(2)
        rho = radius * np.sqrt(u1)
        ang = 2.0 * np.pi * u2
        target = PlanePoint(center.x + rho * np.cos(ang), center.y + rho * np.sin(ang))
        p = _project_onto_line(target, line)
        try:
            f = focal_from_vps(vp, p)
            k = Intrinsics(f=f, px=p.x, py=p.y)
            e = recover_extrinsics(h, k)
        except (ImaginaryFocal, ValueError):
            continue
        if reproduction_residual(h, k, e) > _REPRODUCTION_TOL:
            continue
        cameras.append((k, e))
        if len(cameras) == n:
            return cameras
    raise SamplingExhausted(
        f"found only {len(cameras)} of {n} valid cameras in {100 * n} attempts"
    )


# ── JSON wire format (CLI `synth-cameras` output) ────────────────────


def camera_to_dict(k: Intrinsics, e: Extrinsics, h_check_residual: float) -> dict:
    return {
        "f": k.f,
        "px": k.px,
        "py": k.py,
        "R": e.r.tolist(),
        "t": e.t.tolist(),
        "H_check_residual": h_check_residual,
    }


def camera_from_dict(doc: dict) -> tuple[Intrinsics, Extrinsics]:
    k = Intrinsics(f=float(doc["f"]), px=float(doc["px"]), py=float(doc["py"]))
    e = Extrinsics(np.array(doc["R"], dtype=float), np.array(doc["t"], dtype=float))
    return k, e
