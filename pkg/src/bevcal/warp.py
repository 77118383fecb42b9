"""Inverse perspective mapping of images, points, and feature grids.

Warping uses inverse mapping: every destination pixel center is pulled
back through the homography and sampled from the source. Bilinear
interpolation accumulates in float32 with a fixed y-then-x lerp order so
the output never depends on evaluation order. Source coordinates within
1e-9 px of an integer are snapped to it, which makes identity and
integer-translation warps bit-exact despite canonicalization round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameMismatch, PointAtInfinity
from .projective import Homography, PlanePoint, apply, invert
from .raster import RasterImage

_W_TOL = 1e-12
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Feature-grid geometry: input pixels per cell and the center of cell 0.

    For a stride-s convolution pyramid the center of feature cell 0 sits
    at input coordinate (s - 1) / 2 under the integer-center convention.
    """

    stride: float
    offset: float = 0.0

    def __post_init__(self) -> None:
        if not self.stride > 0:
            raise ValueError(f"stride must be positive, got {self.stride}")

    @classmethod
    def for_stride(cls, stride: float) -> GridSpec:
        return cls(stride=stride, offset=(stride - 1.0) / 2.0)

    def matrix(self) -> np.ndarray:
        """Feature coordinates -> input pixel coordinates."""
        return np.array(
            [
                [self.stride, 0.0, self.offset],
                [0.0, self.stride, self.offset],
                [0.0, 0.0, 1.0],
            ]
        )

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.stride, 0.0, -self.offset / self.stride],
                [0.0, 1.0 / self.stride, -self.offset / self.stride],
                [0.0, 0.0, 1.0],
            ]
        )


def bev_similarity(
    ppm: float, origin: PlanePoint = PlanePoint(0.0, 0.0), flip_y: bool = False
) -> Homography:
    """World->bev similarity: `ppm` pixels per meter, `origin` at bev (0, 0).

    World coordinates taken from map-image clicks are already y-down, so
    the default keeps axis directions; `flip_y` supports y-up world
    frames (bev rows then grow southward).
    """
    sy = -ppm if flip_y else ppm
    m = np.array(
        [
            [ppm, 0.0, -ppm * origin.x],
            [0.0, sy, -sy * origin.y],
            [0.0, 0.0, 1.0],
        ]
    )
    return Homography(m, src_frame="world", dst_frame="bev")


def _source_coordinates(
    h: Homography, out_w: int, out_h: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pull destination pixel centers back to source coordinates.

    Returns (x, y, valid); invalid entries are points at infinity.
    """
    minv = invert(h).m
    if abs(minv[2, 2]) > _W_TOL:
        minv = minv / minv[2, 2]
    iy, ix = np.mgrid[0:out_h, 0:out_w].astype(float)
    w = minv[2, 0] * ix + minv[2, 1] * iy + minv[2, 2]
    valid = np.abs(w) > _W_TOL
    w_safe = np.where(valid, w, 1.0)
    x = (minv[0, 0] * ix + minv[0, 1] * iy + minv[0, 2]) / w_safe
    y = (minv[1, 0] * ix + minv[1, 1] * iy + minv[1, 2]) / w_safe
    for arr in (x, y):
        snapped = np.rint(arr)
        near = np.abs(arr - snapped) < _SNAP_TOL
        arr[near] = snapped[near]
    return x, y, valid


def warp_image(
    src: RasterImage,
    h: Homography,
    out_w: int,
    out_h: int,
    fill: float = 0.0,
    interp: str = "bilinear",
) -> RasterImage:
    """Warp `src` into an (out_w, out_h) destination through h (dst <- src).

    Destination pixels whose preimage falls outside the source (or at
    infinity) take the fill value in every channel. `interp` is
    "nearest" or "bilinear".
    """
    if interp not in ("nearest", "bilinear"):
        raise ValueError(f"interp must be 'nearest' or 'bilinear', got {interp!r}")
    x, y, valid = _source_coordinates(h, out_w, out_h)
    data = src.data
    sh, sw, ch = data.shape
    out_dtype = data.dtype

    if interp == "nearest":
        xi = np.floor(x + 0.5).astype(np.int64)
        yi = np.floor(y + 0.5).astype(np.int64)
        inside = valid & (xi >= 0) & (xi < sw) & (yi >= 0) & (yi < sh)
        xi = np.clip(xi, 0, sw - 1)
        yi = np.clip(yi, 0, sh - 1)
        out = data[yi, xi, :].copy()
        out[~inside] = _fill_value(fill, out_dtype)
        return RasterImage(out)

    inside = valid & (x >= 0.0) & (x <= sw - 1.0) & (y >= 0.0) & (y <= sh - 1.0)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, sw - 1)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    dx = (x - x0).astype(np.float32)[..., None]
    dy = (y - y0).astype(np.float32)[..., None]

    v00 = data[y0, x0, :].astype(np.float32)
    v01 = data[y1, x0, :].astype(np.float32)
    v10 = data[y0, x1, :].astype(np.float32)
    v11 = data[y1, x1, :].astype(np.float32)
    # fixed lerp order: along y at each column, then along x
    c0 = v00 + (v01 - v00) * dy
    c1 = v10 + (v11 - v10) * dy
    res = c0 + (c1 - c0) * dx

    if out_dtype == np.uint8:
        out = np.clip(np.floor(res + np.float32(0.5)), 0, 255).astype(np.uint8)
    else:
        out = res
    out[~inside] = _fill_value(fill, out_dtype)
    return RasterImage(np.ascontiguousarray(out))


def _fill_value(fill: float, dtype: np.dtype):
    if dtype == np.uint8:
        return np.uint8(np.clip(round(fill), 0, 255))
    return np.float32(fill)


def grid_homography(
    h_bev_ori: Homography, ori_grid: GridSpec, bev_grid: GridSpec
) -> Homography:
    """Feature-map homography: S_bev^-1 . H^bev_ori . S_ori (ori_f -> bev_f).

    S(g) maps feature coordinates to input pixel coordinates, so the
    result carries original-view feature cells directly to BEV feature
    cells; with unit strides and zero offsets it degenerates to the
    image-space composition.
    """
    if (h_bev_ori.src_frame, h_bev_ori.dst_frame) != ("ori", "bev"):
        raise FrameMismatch(
            f"expected an ori->bev homography, got {h_bev_ori.src_frame}->{h_bev_ori.dst_frame}"
        )
    m = bev_grid.inverse_matrix() @ h_bev_ori.m @ ori_grid.matrix()
    return Homography(m, src_frame="ori_f", dst_frame="bev_f")


def warp_points(h: Homography, pts: list[PlanePoint]) -> list[PlanePoint]:
    """Apply h to each point; a point at infinity reports its list index."""
    out = []
    for i, p in enumerate(pts):
        try:
            out.append(apply(h, p))
        except PointAtInfinity as exc:
            raise PointAtInfinity(str(exc), index=i) from exc
    return out
