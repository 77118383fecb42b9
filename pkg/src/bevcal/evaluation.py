"""Detection-vs-ground-truth matching and precision/recall metrics.

Matching is greedy in descending confidence with single-assignment
ground truths, under either of the two criteria: rotated-box IoU above a
threshold, or center distance below a multiplier of the ground-truth
length (the position-only criterion). AP uses all-point interpolation:
the exact area under the monotone precision envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoGroundTruth
from .rbox import RBox, rbox_iou


@dataclass(frozen=True)
class Detection:
    box: RBox
    confidence: float
    frame_id: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class MatchCriterion:
    """iou: IoU >= threshold. center_distance: |dc| <= threshold * l_gt."""

    kind: str
    threshold: float

    def __post_init__(self) -> None:
        if self.kind not in ("iou", "center_distance"):
            raise ValueError(f"criterion kind must be iou|center_distance, got {self.kind!r}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")

    @classmethod
    def parse(cls, text: str) -> MatchCriterion:
        """Parse CLI syntax 'iou:0.5' or 'center:0.5'."""
        kind, _, value = text.partition(":")
        kind = {"iou": "iou", "center": "center_distance", "center_distance": "center_distance"}.get(kind)
        if kind is None or not value:
            raise ValueError(f"expected 'iou:<t>' or 'center:<t>', got {text!r}")
        return cls(kind=kind, threshold=float(value))


@dataclass(frozen=True)
class FrameMatches:
    """Per-frame matching outcome: (confidence, is_tp) per detection index."""

    frame_id: int | str
    n_gt: int
    detections: tuple[tuple[float, bool], ...]


@dataclass(frozen=True)
class PrCurve:
    recalls: tuple[float, ...]
    precisions: tuple[float, ...]
    envelope: tuple[float, ...]


def _eligibility(det: Detection, gt: RBox, crit: MatchCriterion) -> float | None:
    """Matching quality if eligible (higher is better), else None."""
    if crit.kind == "iou":
        iou = rbox_iou(det.box, gt)
        return iou if iou >= crit.threshold else None
    dist = math.hypot(det.box.cx - gt.cx, det.box.cy - gt.cy)
    return -dist if dist <= crit.threshold * gt.l else None


def match_frame(
    dets: list[Detection], gts: list[RBox], crit: MatchCriterion
) -> list[tuple[int, int | None]]:
    """Greedy single-frame matching in descending confidence.

    Each ground truth is matched at most once; among eligible ground
    truths a detection takes the best one (max IoU or min distance),
    ties to the lower gt index. Returns one (det index, gt index or
    None) entry per detection, in processing order.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken: set[int] = set()
    result: list[tuple[int, int | None]] = []
    for i in order:
        best_gt: int | None = None
        best_quality = -math.inf
        for j, gt in enumerate(gts):
            if j in taken:
                continue
            quality = _eligibility(dets[i], gt, crit)
            if quality is not None and quality > best_quality:
                best_quality = quality
                best_gt = j
        if best_gt is not None:
            taken.add(best_gt)
        result.append((i, best_gt))
    return result


def match_dataset(
    frames: list[tuple[int | str, list[Detection], list[RBox]]],
    crit: MatchCriterion,
) -> list[FrameMatches]:
    """Match every (frame_id, detections, ground_truths) triple."""
    out = []
    for frame_id, dets, gts in frames:
        matched = dict(match_frame(dets, gts, crit))
        out.append(
            FrameMatches(
                frame_id=frame_id,
                n_gt=len(gts),
                detections=tuple(
                    (dets[i].confidence, matched[i] is not None) for i in range(len(dets))
                ),
            )
        )
    return out


def _ranked_detections(frames: list[FrameMatches]) -> list[tuple[float, bool]]:
    """All detections sorted by confidence desc, ties by frame id then index."""
    rows = [
        (-conf, fm.frame_id, det_idx, is_tp)
        for fm in frames
        for det_idx, (conf, is_tp) in enumerate(fm.detections)
    ]
    rows.sort()
    return [(-neg_conf, is_tp) for neg_conf, _, _, is_tp in rows]


def average_precision(frames: list[FrameMatches]) -> tuple[float, PrCurve]:
    """All-point-interpolated AP and the PR curve it integrates.

    The envelope is the monotone non-increasing upper hull of precision
    over recall; AP is the exact area under it on recall in [0, 1].
    """
    total_gt = sum(fm.n_gt for fm in frames)
    if total_gt == 0:
        raise NoGroundTruth("dataset has no ground-truth boxes")
    ranked = _ranked_detections(frames)
    recalls: list[float] = []
    precisions: list[float] = []
    tp = 0
    for rank, (_, is_tp) in enumerate(ranked, start=1):
        tp += int(is_tp)
        precisions.append(tp / rank)
        recalls.append(tp / total_gt)
    envelope = precisions.copy()
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recalls, envelope):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return ap, PrCurve(tuple(recalls), tuple(precisions), tuple(envelope))


def precision_recall_at(
    frames: list[FrameMatches], confidence_threshold: float
) -> tuple[float, float]:
    """Operating-point precision and recall at a fixed confidence threshold.

    Detections with confidence >= threshold count; with none kept,
    precision is defined as 1.0 by convention.
    """
    total_gt = sum(fm.n_gt for fm in frames)
    if total_gt == 0:
        raise NoGroundTruth("dataset has no ground-truth boxes")
    tp = fp = 0
    for fm in frames:
        for conf, is_tp in fm.detections:
            if conf >= confidence_threshold:
                tp += int(is_tp)
                fp += int(not is_tp)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / total_gt
    return precision, recall


def evaluation_report(
    frames: list[FrameMatches], crit: MatchCriterion
) -> dict:
    """JSON-ready report: AP, PR samples, per-frame TP/FP/FN counts."""
    ap, curve = average_precision(frames)
    per_frame = []
    for fm in frames:
        tp = sum(1 for _, is_tp in fm.detections if is_tp)
        per_frame.append(
            {
                "frame": fm.frame_id,
                "tp": tp,
                "fp": len(fm.detections) - tp,
                "fn": fm.n_gt - tp,
            }
        )
    return {
        "criterion": {"kind": crit.kind, "threshold": crit.threshold},
        "ap": ap,
        "pr_curve": {
            "recall": list(curve.recalls),
            "precision": list(curve.precisions),
            "envelope": list(curve.envelope),
        },
        "frames": per_frame,
        "n_gt": sum(fm.n_gt for fm in frames),
        "precision_at_zero_detections": 1.0,
    }
