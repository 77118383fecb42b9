"""Rotated boxes in the bird's-eye view: geometry, targets, and loss.

An r-box is undirected: its heading lives in [0, pi) and the length is
the longer side by construction, so r refers to the long axis and the
90-degree rectangle ambiguity is resolved once, at construction. Tails
augment an r-box with the BEV offset from the box center to the warped
image of the 3D box's top-face center, marking the stretched pixels a
vehicle occupies after inverse perspective mapping.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Extrinsics, Intrinsics, homography_from_camera, project_to_pixels
from .errors import FrameMismatch, LengthMismatch
from .projective import Homography, PlanePoint, apply, compose

PI = math.pi
ANGLE_WINDOW = PI / 4.0  # max |r_pred - r0| and the anchor-eligibility bound
SIZE_RATIO_BOUND = 4.0


def _normalize_angle_half_turn(r: float) -> float:
    r = r % PI
    if r >= PI:  # fp: tiny negatives can wrap to exactly pi
        r = 0.0
    return r


@dataclass(frozen=True)
class RBox:
    """BEV rotated box: center, length (long side), width, heading in [0, pi)."""

    cx: float
    cy: float
    l: float
    w: float
    r: float
    unit: str = "bev_px"

    def __post_init__(self) -> None:
        if not (self.l > 0 and self.w > 0):
            raise ValueError(f"box sides must be positive, got l={self.l}, w={self.w}")
        if not all(map(math.isfinite, (self.cx, self.cy, self.l, self.w, self.r))):
            raise ValueError("box fields must be finite")
        l, w, r = self.l, self.w, self.r
        if w > l:
            l, w = w, l
            r = r + PI / 2.0
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "r", _normalize_angle_half_turn(r))

    def area(self) -> float:
        return self.l * self.w


@dataclass(frozen=True)
class TailedRBox:
    """R-box plus the offset from its center to the tail end."""

    box: RBox
    u_tail: float
    v_tail: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u_tail) and math.isfinite(self.v_tail)):
            raise ValueError("tail offset must be finite")


@dataclass(frozen=True)
class SceneBox3D:
    """Ground-anchored 3D vehicle box; the bottom face lies in z = 0."""

    center_ground: PlanePoint
    l: float
    w: float
    h: float
    yaw: float

    def __post_init__(self) -> None:
        # h = 0 is allowed: a degenerate flat box whose tail is exactly zero
        if not (self.l > 0 and self.w > 0 and self.h >= 0):
            raise ValueError("box dimensions must be positive (height may be zero)")
        object.__setattr__(self, "yaw", self.yaw % (2.0 * PI))

    def bottom_rbox(self) -> RBox:
        return RBox(
            cx=self.center_ground.x,
            cy=self.center_ground.y,
            l=self.l,
            w=self.w,
            r=self.yaw,
            unit="world_m",
        )


@dataclass(frozen=True)
class AnchorSet:
    """3 prediction layers x 9 anchors (l, w, r) with angles k*pi/9."""

    layers: tuple[tuple[tuple[float, float, float], ...], ...]

    def __post_init__(self) -> None:
        if len(self.layers) != 3:
            raise ValueError(f"expected 3 anchor layers, got {len(self.layers)}")
        for li, layer in enumerate(self.layers):
            if len(layer) != 9:
                raise ValueError(f"layer {li} has {len(layer)} anchors, expected 9")
            for k, (_, _, r) in enumerate(layer):
                if abs(r - k * PI / 9.0) > 1e-12:
                    raise ValueError(
                        f"layer {li} anchor {k} angle {r} != {k}*pi/9"
                    )

    @classmethod
    def from_sizes(cls, sizes: list[tuple[float, float]]) -> AnchorSet:
        """One (l, w) per layer, swept over the 9 rotation angles."""
        if len(sizes) != 3:
            raise ValueError(f"need 3 layer sizes, got {len(sizes)}")
        layers = tuple(
            tuple((l, w, k * PI / 9.0) for k in range(9)) for l, w in sizes
        )
        return cls(layers)

    def flat(self) -> list[tuple[float, float, float]]:
        return [anchor for layer in self.layers for anchor in layer]


def rbox_corners(b: RBox) -> list[PlanePoint]:
    """Rectangle corners, starting at the pre-rotation (+l/2, +w/2) corner.

    Order is (+,+), (-,+), (-,-), (+,-) rotated by r: counterclockwise
    under the y-down BEV convention.
    """
    hl, hw = b.l / 2.0, b.w / 2.0
    cos_r, sin_r = math.cos(b.r), math.sin(b.r)
    out = []
    for sx, sy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        out.append(
            PlanePoint(b.cx + sx * cos_r - sy * sin_r, b.cy + sx * sin_r + sy * cos_r)
        )
    return out


def _corner_tuples(b: RBox) -> list[tuple[float, float]]:
    return [(p.x, p.y) for p in rbox_corners(b)]


def _shoelace(poly: list[tuple[float, float]]) -> float:
    if len(poly) < 3:
        return 0.0
    acc = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + [poly[0]]):
        acc += x0 * y1 - x1 * y0
    return abs(acc) / 2.0


def _clip_convex(
    subject: list[tuple[float, float]], clip: list[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip a convex polygon by a CCW convex polygon."""
    output = subject
    cp1 = clip[-1]
    for cp2 in clip:
        if not output:
            return []
        ex, ey = cp2[0] - cp1[0], cp2[1] - cp1[1]

        def inside(p: tuple[float, float]) -> bool:
            return ex * (p[1] - cp1[1]) - ey * (p[0] - cp1[0]) >= 0.0

        def intersection(s: tuple[float, float], e: tuple[float, float]):
            dcx, dcy = cp1[0] - cp2[0], cp1[1] - cp2[1]
            dpx, dpy = s[0] - e[0], s[1] - e[1]
            n1 = cp1[0] * cp2[1] - cp1[1] * cp2[0]
            n2 = s[0] * e[1] - s[1] * e[0]
            den = dcx * dpy - dcy * dpx
            return ((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den)

        inputs, output = output, []
        s = inputs[-1]
        for e in inputs:
            if inside(e):
                if not inside(s):
                    output.append(intersection(s, e))
                output.append(e)
            elif inside(s):
                output.append(intersection(s, e))
            s = e
        cp1 = cp2
    return output


def rbox_iou(a: RBox, b: RBox) -> float:
    """Intersection over union of two rotated boxes via polygon clipping.

    Exactly symmetric: arguments are put in a canonical order before any
    arithmetic, so rbox_iou(a, b) and rbox_iou(b, a) run identical
    operations. Areas come from the shoelace formula on the same corner
    polygons used for clipping, which makes rbox_iou(x, x) exactly 1.
    """
    key_a = (a.cx, a.cy, a.l, a.w, a.r)
    key_b = (b.cx, b.cy, b.l, b.w, b.r)
    if key_b < key_a:
        a, b = b, a
    poly_a = _corner_tuples(a)
    poly_b = _corner_tuples(b)
    area_a = _shoelace(poly_a)
    area_b = _shoelace(poly_b)
    if min(area_a, area_b) < 1e-12:
        return 0.0
    inter = _shoelace(_clip_convex(poly_a, poly_b))
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def rotated_nms(boxes: list[RBox], scores: list[float], iou_thresh: float) -> list[int]:
    """Greedy descending-score suppression; ties keep the lower input index.

    Returns kept indices in descending score order. A candidate is
    suppressed when its IoU with an already-kept box exceeds the
    threshold.
    """
    if len(boxes) != len(scores):
        raise LengthMismatch(f"{len(boxes)} boxes vs {len(scores)} scores")
    if not 0.0 <= iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in [0, 1], got {iou_thresh}")
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    for i in order:
        if all(rbox_iou(boxes[i], boxes[j]) <= iou_thresh for j in kept):
            kept.append(i)
    return kept


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def angle_decode(x: float, r0: float) -> float:
    """Decode a raw angle activation against its anchor angle.

    r = (pi/2) * (sigmoid(x) - 0.5) + r0, normalized into [0, pi); the
    offset from the anchor stays within (-pi/4, pi/4).
    """
    return _normalize_angle_half_turn(ANGLE_WINDOW * 2.0 * (_sigmoid(x) - 0.5) + r0)


def angle_residual(a: float, b: float) -> float:
    """Signed pi-periodic angle difference in [-pi/2, pi/2)."""
    res = ((a - b + PI / 2.0) % PI) - PI / 2.0
    if res >= PI / 2.0:  # fp wrap at the modulus boundary
        res -= PI
    return res


def rotation_loss(r_pred: float, r_gt: float) -> tuple[float, float]:
    """sin^2 rotation loss and its analytic derivative wrt r_pred.

    The pi-periodicity of sin^2 matches undirected boxes, and any
    residual in (-pi/2, pi/2) lies in a converging basin.
    """
    d = r_pred - r_gt
    s = math.sin(d)
    return s * s, math.sin(2.0 * d)


def assign_anchors(gt: RBox, anchors: AnchorSet) -> list[tuple[int, bool]]:
    """Angle-eligible anchors for a ground-truth box, with positivity flags.

    An anchor is angle-eligible iff its pi-periodic distance to the gt
    heading is below pi/4; among those, an anchor is positive when both
    side ratios are within SIZE_RATIO_BOUND. Indices are layer-major
    into AnchorSet.flat().
    """
    out: list[tuple[int, bool]] = []
    for idx, (al, aw, ar) in enumerate(anchors.flat()):
        if abs(angle_residual(ar, gt.r)) >= ANGLE_WINDOW:
            continue
        ratio = max(gt.l / al, al / gt.l, gt.w / aw, aw / gt.w)
        out.append((idx, ratio <= SIZE_RATIO_BOUND))
    return out


def _rbox_from_mapped_corners(corners: np.ndarray, unit: str) -> RBox:
    """Rebuild an RBox from the 4 images of its corners under a similarity."""
    center = corners.mean(axis=0)
    e_len = corners[0] - corners[1]  # image of the pre-rotation +l edge
    e_wid = corners[0] - corners[3]  # image of the pre-rotation +w edge
    return RBox(
        cx=float(center[0]),
        cy=float(center[1]),
        l=float(np.hypot(*e_len)),
        w=float(np.hypot(*e_wid)),
        r=float(math.atan2(e_len[1], e_len[0])),
        unit=unit,
    )


def tailed_rbox_from_scene(
    b: SceneBox3D, k: Intrinsics, e: Extrinsics, h_bev_ori: Homography
) -> TailedRBox:
    """BEV tailed r-box of a 3D box seen by a camera calibrated to h_bev_ori.

    The r-box is the image of the box's bottom rectangle under
    H^bev_world (a similarity, so it stays a rectangle). The tail end is
    the image of the 3D top-face center: projected into the original
    view with the full camera, then warped to BEV. The stored offset is
    computed between the warped top and bottom centers through the same
    projection path, so a zero-height box has an exactly zero tail.
    """
    if (h_bev_ori.src_frame, h_bev_ori.dst_frame) != ("ori", "bev"):
        raise FrameMismatch(
            f"expected an ori->bev homography, got {h_bev_ori.src_frame}->{h_bev_ori.dst_frame}"
        )
    h_bev_world = compose(h_bev_ori, homography_from_camera(k, e))

    bottom = b.bottom_rbox()
    corners_world = np.array(_corner_tuples(bottom))
    # depth check for both face centers (raises ProjectionBehindCamera)
    centers_3d = np.array(
        [
            [b.center_ground.x, b.center_ground.y, 0.0],
            [b.center_ground.x, b.center_ground.y, b.h],
        ]
    )
    pixels = project_to_pixels(k, e, centers_3d)

    corners_bev = np.array(
        [(p.x, p.y) for p in (apply(h_bev_world, PlanePoint(*c)) for c in corners_world)]
    )
    bev_box = _rbox_from_mapped_corners(corners_bev, unit="bev_px")

    bottom_bev = apply(h_bev_ori, PlanePoint(*pixels[0]))
    tail_end = apply(h_bev_ori, PlanePoint(*pixels[1]))
    return TailedRBox(
        box=bev_box,
        u_tail=tail_end.x - bottom_bev.x,
        v_tail=tail_end.y - bottom_bev.y,
    )


# ── label JSON (one document per frame) ──────────────────────────────


def labels_to_dict(frame_id: int | str, boxes: list[TailedRBox]) -> dict:
    return {
        "frame": frame_id,
        "boxes": [
            {
                "cx": t.box.cx,
                "cy": t.box.cy,
                "l": t.box.l,
                "w": t.box.w,
                "r": t.box.r,
                "u_tail": t.u_tail,
                "v_tail": t.v_tail,
                "unit": t.box.unit,
            }
            for t in boxes
        ],
    }


def labels_from_dict(doc: dict) -> tuple[int | str, list[TailedRBox]]:
    boxes = [
        TailedRBox(
            box=RBox(
                cx=float(e["cx"]),
                cy=float(e["cy"]),
                l=float(e["l"]),
                w=float(e["w"]),
                r=float(e["r"]),
                unit=e.get("unit", "bev_px"),
            ),
            u_tail=float(e["u_tail"]),
            v_tail=float(e["v_tail"]),
        )
        for e in doc["boxes"]
    ]
    return doc["frame"], boxes


def save_labels(frame_id: int | str, boxes: list[TailedRBox], path: str | Path) -> None:
    Path(path).write_text(json.dumps(labels_to_dict(frame_id, boxes), indent=2) + "\n")


def load_labels(path: str | Path) -> tuple[int | str, list[TailedRBox]]:
    return labels_from_dict(json.loads(Path(path).read_text()))
