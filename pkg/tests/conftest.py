"""Shared fixtures: synthetic camera construction independent of the library.

The camera builder here is deliberately written from scratch (plain
matrix products, no bevcal imports beyond the Homography container) so
tests that round-trip library results against it are checking two
independent code paths.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from bevcal.projective import Homography


def rotation_matrix(tilt_rad: float, yaw_rad: float) -> np.ndarray:
    """World->camera rotation: nadir view tilted by `tilt` and panned by `yaw`.

    World frame is x-east, y-north, z-up; camera frame is x-right,
    y-down, z-forward. tilt = 0 looks straight down.
    """
    nadir = np.diag([1.0, -1.0, -1.0])
    ct, st = math.cos(tilt_rad), math.sin(tilt_rad)
    tilt = np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])
    cy, sy = math.cos(yaw_rad), math.sin(yaw_rad)
    yaw = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return tilt @ nadir @ yaw


def make_camera(
    f: float = 1000.0,
    px: float = 960.0,
    py: float = 540.0,
    tilt_deg: float = 30.0,
    yaw_deg: float = 40.0,
    height: float = 10.0,
    cam_xy: tuple[float, float] = (0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray, np.ndarray, Homography]:
    """Build (K, R, t, H^ori_world) for a synthetic traffic camera."""
    k = np.array([[f, 0.0, px], [0.0, f, py], [0.0, 0.0, 1.0]])
    r = rotation_matrix(math.radians(tilt_deg), math.radians(yaw_deg))
    center = np.array([cam_xy[0], cam_xy[1], height])
    t = -r @ center
    h = k @ np.column_stack([r[:, 0], r[:, 1], t])
    return k, r, t, Homography(h, src_frame="world", dst_frame="ori")


def ground_axis_hit(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """World point where the optical axis meets the z=0 plane."""
    center = -r.T @ t
    forward = r[2, :]  # camera z-axis in world coordinates
    lam = -center[2] / forward[2]
    return center[:2] + lam * forward[:2]


def project_ground(h: np.ndarray | Homography, world_xy: np.ndarray) -> np.ndarray:
    """Map (n, 2) world points through a 3x3 matrix, homogenizing."""
    m = h.m if isinstance(h, Homography) else h
    pts = np.column_stack([world_xy, np.ones(len(world_xy))])
    img = pts @ m.T
    return img[:, :2] / img[:, 2:3]


def random_scene_camera(rng: np.random.Generator):
    """Draw a well-conditioned synthetic camera with finite vanishing points."""
    return make_camera(
        f=rng.uniform(600.0, 2000.0),
        px=rng.uniform(800.0, 1100.0),
        py=rng.uniform(400.0, 700.0),
        tilt_deg=rng.uniform(15.0, 65.0),
        yaw_deg=rng.uniform(15.0, 75.0),
        height=rng.uniform(4.0, 15.0),
    )


@pytest.fixture
def default_camera():
    return make_camera()
