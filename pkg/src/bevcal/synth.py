"""Synthetic scene generation: 3D vehicle boxes viewed by cameras that
keep a calibrated homography invariant.

The generator places non-overlapping vehicles on the road plane by
rejection sampling, draws a camera from the homography-consistent
family, and emits dual-view ground truth: tailed r-boxes in BEV plus the
projected bottom/top rectangles in the original view. There is no
rendering here; frames are geometry and labels only, which is exactly
what the evaluation pipeline needs as its deterministic oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from shapely.geometry import Point, Polygon

from .camera import Extrinsics, Intrinsics, project_to_pixels, sample_camera_family
from .errors import PlacementExhausted, ProjectionBehindCamera
from .evaluation import Detection
from .projective import Homography, PlanePoint, compose, homography_from_dict, homography_to_dict, invert
from .rbox import RBox, SceneBox3D, TailedRBox, rbox_corners, rbox_iou, tailed_rbox_from_scene
from .warp import bev_similarity

DEFAULT_LENGTH_RANGE = (3.5, 5.5)
DEFAULT_WIDTH_RANGE = (1.6, 2.1)
DEFAULT_HEIGHT_RANGE = (1.4, 2.0)
_DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class BevSpec:
    """BEV raster geometry: scale and the world point at BEV pixel (0, 0)."""

    ppm: float
    origin_x: float = 0.0
    origin_y: float = 0.0
    width: int = 800
    height: int = 800

    def __post_init__(self) -> None:
        if not self.ppm > 0:
            raise ValueError(f"pixels-per-meter must be positive, got {self.ppm}")

    def homography(self) -> Homography:
        return bev_similarity(self.ppm, PlanePoint(self.origin_x, self.origin_y))


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to generate frames for one calibrated camera."""

    homography: Homography  # world -> ori
    image_width: int
    image_height: int
    bev: BevSpec
    n_vehicles: int
    placement_polygon: tuple[tuple[float, float], ...]
    seed: int
    length_range: tuple[float, float] = DEFAULT_LENGTH_RANGE
    width_range: tuple[float, float] = DEFAULT_WIDTH_RANGE
    height_range: tuple[float, float] = DEFAULT_HEIGHT_RANGE
    pp_radius: float | None = None  # default: 5% of image width

    def __post_init__(self) -> None:
        for name, (lo, hi) in (
            ("length", self.length_range),
            ("width", self.width_range),
            ("height", self.height_range),
        ):
            if not (0 < lo <= hi):
                raise ValueError(f"invalid {name} range ({lo}, {hi})")
        if self.length_range[0] <= self.width_range[1]:
            raise ValueError("vehicle length range must lie above the width range")
        if self.n_vehicles < 0:
            raise ValueError("n_vehicles must be non-negative")
        if len(self.placement_polygon) < 3:
            raise ValueError("placement polygon needs at least 3 vertices")
        frames = (self.homography.src_frame, self.homography.dst_frame)
        if frames != ("world", "ori"):
            raise ValueError(f"scenario homography must map world->ori, got {frames}")

    def principal_center(self) -> PlanePoint:
        return PlanePoint(self.image_width / 2.0, self.image_height / 2.0)

    def sampling_radius(self) -> float:
        return 0.05 * self.image_width if self.pp_radius is None else self.pp_radius


@dataclass(frozen=True)
class SyntheticFrame:
    spec: ScenarioSpec
    camera: tuple[Intrinsics, Extrinsics]
    boxes: tuple[SceneBox3D, ...]
    labels_bev: tuple[TailedRBox, ...]
    labels_ori: tuple[np.ndarray, ...]  # (8, 2) pixels: bottom then top corners


def _polygon_centroid_fallback(vertices: tuple[tuple[float, float], ...]) -> PlanePoint:
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    return PlanePoint(sum(xs) / len(xs), sum(ys) / len(ys))


def projected_box_points(box: SceneBox3D, k: Intrinsics, e: Extrinsics) -> np.ndarray:
    """Original-view pixels of the 8 box corners: bottom 4 then top 4."""
    bottom = np.array([(p.x, p.y, 0.0) for p in rbox_corners(box.bottom_rbox())])
    top = bottom + (0.0, 0.0, box.h)
    return project_to_pixels(k, e, np.vstack([bottom, top]))


def generate_frame(spec: ScenarioSpec, camera_seed: int) -> SyntheticFrame:
    """Generate one synthetic frame, deterministic under (spec.seed, camera_seed).

    The camera comes from the homography-consistent family; vehicles are
    placed by rejection sampling with their centers inside the placement
    polygon, overlapping nothing already accepted and fully in front of
    the camera. A degenerate (zero-area) polygon places every vehicle at
    its vertex centroid.
    """
    (k, e), = sample_camera_family(
        spec.homography,
        spec.principal_center(),
        spec.sampling_radius(),
        n=1,
        seed=camera_seed,
    )
    h_bev_ori = compose(spec.bev.homography(), invert(spec.homography))

    polygon = Polygon(spec.placement_polygon)
    degenerate = polygon.area < _DEGENERATE_AREA
    min_x, min_y, max_x, max_y = (
        polygon.bounds if not degenerate else (0.0, 0.0, 0.0, 0.0)
    )

    rng = np.random.default_rng(spec.seed)
    accepted: list[SceneBox3D] = []
    accepted_ground: list[RBox] = []
    labels_bev: list[TailedRBox] = []
    labels_ori: list[np.ndarray] = []

    budget = 1000 * spec.n_vehicles
    attempts = 0
    while len(accepted) < spec.n_vehicles:
        if attempts >= budget:
            raise PlacementExhausted(
                f"placed {len(accepted)} of {spec.n_vehicles} vehicles in {budget} attempts"
            )
        attempts += 1
        if degenerate:
            center = _polygon_centroid_fallback(spec.placement_polygon)
        else:
            cx = rng.uniform(min_x, max_x)
            cy = rng.uniform(min_y, max_y)
            center = PlanePoint(cx, cy)
        l = rng.uniform(*spec.length_range)
        w = rng.uniform(*spec.width_range)
        h = rng.uniform(*spec.height_range)
        yaw = rng.uniform(0.0, 2.0 * math.pi)

        if not degenerate and not polygon.contains(Point(center.x, center.y)):
            continue
        box = SceneBox3D(center_ground=center, l=l, w=w, h=h, yaw=yaw)
        ground = box.bottom_rbox()
        if any(rbox_iou(ground, other) > 0.0 for other in accepted_ground):
            continue
        try:
            label = tailed_rbox_from_scene(box, k, e, h_bev_ori)
            ori_points = projected_box_points(box, k, e)
        except ProjectionBehindCamera:
            continue
        accepted.append(box)
        accepted_ground.append(ground)
        labels_bev.append(label)
        labels_ori.append(ori_points)

    return SyntheticFrame(
        spec=spec,
        camera=(k, e),
        boxes=tuple(accepted),
        labels_bev=tuple(labels_bev),
        labels_ori=tuple(labels_ori),
    )


def perturb_labels(
    frame: SyntheticFrame,
    sigma_center: float,
    sigma_angle: float,
    drop_rate: float,
    spurious_rate: float,
    seed: int,
    frame_id: int = 0,
    confidence_scale: float = 1.0,
) -> list[Detection]:
    """Oracle detector: ground truth with controlled degradation.

    Each ground-truth box is dropped with probability drop_rate or
    emitted with Gaussian center noise (sigma_center, meters) and angle
    noise (sigma_angle, radians); its confidence decays as
    exp(-magnitude / confidence_scale) where magnitude combines the
    center shift in meters and the arc swept by the angle error.
    Spurious detections (low confidence, random pose) are injected at a
    binomial rate per ground-truth box. Deterministic under seed.
    """
    for name, rate in (("drop_rate", drop_rate), ("spurious_rate", spurious_rate)):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    ppm = frame.spec.bev.ppm
    detections: list[Detection] = []
    for tailed in frame.labels_bev:
        drop_u = rng.random()
        dx_m, dy_m = rng.normal(0.0, sigma_center, size=2) if sigma_center > 0 else (0.0, 0.0)
        dr = rng.normal(0.0, sigma_angle) if sigma_angle > 0 else 0.0
        if drop_u < drop_rate:
            continue
        box = tailed.box
        magnitude = math.hypot(dx_m, dy_m) + abs(dr) * (box.l / ppm) / 2.0
        detections.append(
            Detection(
                box=RBox(
                    cx=box.cx + dx_m * ppm,
                    cy=box.cy + dy_m * ppm,
                    l=box.l,
                    w=box.w,
                    r=box.r + dr,
                    unit=box.unit,
                ),
                confidence=math.exp(-magnitude / confidence_scale),
                frame_id=frame_id,
            )
        )
    n_spurious = int(rng.binomial(len(frame.labels_bev), spurious_rate)) if frame.labels_bev else 0
    for _ in range(n_spurious):
        sx = rng.uniform(0.0, frame.spec.bev.width)
        sy = rng.uniform(0.0, frame.spec.bev.height)
        sl = rng.uniform(*frame.spec.length_range) * ppm
        sw = rng.uniform(*frame.spec.width_range) * ppm
        syaw = rng.uniform(0.0, math.pi)
        conf = rng.uniform(0.05, 0.5)
        detections.append(
            Detection(
                box=RBox(cx=sx, cy=sy, l=sl, w=sw, r=syaw),
                confidence=float(conf),
                frame_id=frame_id,
            )
        )
    return detections


# ── scenario JSON (CLI `synth-frames --spec`) ────────────────────────


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "homography": homography_to_dict(spec.homography),
        "image_size": [spec.image_width, spec.image_height],
        "bev": {
            "ppm": spec.bev.ppm,
            "origin": [spec.bev.origin_x, spec.bev.origin_y],
            "size": [spec.bev.width, spec.bev.height],
        },
        "n_vehicles": spec.n_vehicles,
        "placement_polygon": [list(v) for v in spec.placement_polygon],
        "seed": spec.seed,
        "length_range": list(spec.length_range),
        "width_range": list(spec.width_range),
        "height_range": list(spec.height_range),
        **({"pp_radius": spec.pp_radius} if spec.pp_radius is not None else {}),
    }


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    bev = doc["bev"]
    return ScenarioSpec(
        homography=homography_from_dict(doc["homography"]),
        image_width=int(doc["image_size"][0]),
        image_height=int(doc["image_size"][1]),
        bev=BevSpec(
            ppm=float(bev["ppm"]),
            origin_x=float(bev["origin"][0]),
            origin_y=float(bev["origin"][1]),
            width=int(bev["size"][0]),
            height=int(bev["size"][1]),
        ),
        n_vehicles=int(doc["n_vehicles"]),
        placement_polygon=tuple((float(x), float(y)) for x, y in doc["placement_polygon"]),
        seed=int(doc["seed"]),
        length_range=tuple(doc.get("length_range", DEFAULT_LENGTH_RANGE)),
        width_range=tuple(doc.get("width_range", DEFAULT_WIDTH_RANGE)),
        height_range=tuple(doc.get("height_range", DEFAULT_HEIGHT_RANGE)),
        pp_radius=doc.get("pp_radius"),
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def save_scenario(spec: ScenarioSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(spec), indent=2) + "\n")
