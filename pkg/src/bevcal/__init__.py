"""bevcal: metric bird's-eye-view geometry for uncalibrated traffic cameras.

Calibrates the road-plane homography from landmark correspondences,
recovers camera intrinsics/extrinsics consistent with it, warps images
and detection targets between the original and bird's-eye views, builds
tailed rotated-box labels, and evaluates rotated-box detections.
"""

from .camera import (
    Extrinsics,
    Intrinsics,
    VanishingPair,
    focal_from_vps,
    homography_from_camera,
    principal_point_line,
    recover_extrinsics,
    reproduction_residual,
    sample_camera_family,
    vanishing_points,
)
from .evaluation import (
    Detection,
    FrameMatches,
    MatchCriterion,
    average_precision,
    match_dataset,
    match_frame,
    precision_recall_at,
)
from .projective import (
    CorrespondencePair,
    CorrespondenceSet,
    ErrorReport,
    Homography,
    PlanePoint,
    apply,
    compose,
    estimate_homography_dlt,
    invert,
    reprojection_report,
)
from .raster import RasterImage, read_image, write_image
from .rbox import (
    AnchorSet,
    RBox,
    SceneBox3D,
    TailedRBox,
    angle_decode,
    angle_residual,
    assign_anchors,
    rbox_corners,
    rbox_iou,
    rotated_nms,
    rotation_loss,
    tailed_rbox_from_scene,
)
from .synth import BevSpec, ScenarioSpec, SyntheticFrame, generate_frame, perturb_labels
from .warp import GridSpec, bev_similarity, grid_homography, warp_image, warp_points

__all__ = [
    "AnchorSet",
    "BevSpec",
    "CorrespondencePair",
    "CorrespondenceSet",
    "Detection",
    "ErrorReport",
    "Extrinsics",
    "FrameMatches",
    "GridSpec",
    "Homography",
    "Intrinsics",
    "MatchCriterion",
    "PlanePoint",
    "RBox",
    "RasterImage",
    "ScenarioSpec",
    "SceneBox3D",
    "SyntheticFrame",
    "TailedRBox",
    "VanishingPair",
    "angle_decode",
    "angle_residual",
    "apply",
    "assign_anchors",
    "average_precision",
    "bev_similarity",
    "compose",
    "estimate_homography_dlt",
    "focal_from_vps",
    "generate_frame",
    "grid_homography",
    "homography_from_camera",
    "invert",
    "match_dataset",
    "match_frame",
    "perturb_labels",
    "precision_recall_at",
    "principal_point_line",
    "rbox_corners",
    "rbox_iou",
    "read_image",
    "recover_extrinsics",
    "reprojection_report",
    "reproduction_residual",
    "rotated_nms",
    "rotation_loss",
    "sample_camera_family",
    "tailed_rbox_from_scene",
    "vanishing_points",
    "warp_image",
    "warp_points",
    "write_image",
]

__version__ = "0.1.0"
