"""Command-line entry point binding all toolkit modules.

Exit codes: 0 success, 1 usage error, 2 data error. Errors go to stderr
with a machine-parsable ``error:`` prefix. All file formats are the JSON
schemas of the owning modules; flags can be defaulted through
environment variables prefixed ``BEVCAL_``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .camera import camera_to_dict, reproduction_residual, sample_camera_family
from .errors import GeometryError
from .evaluation import MatchCriterion, match_dataset, evaluation_report
from .projective import (
    Homography,
    PlanePoint,
    compose,
    estimate_homography_dlt,
    invert,
    load_correspondences,
    load_homography,
    save_homography,
)
from .raster import read_image, write_image
from .rbox import RBox, labels_from_dict, save_labels
from .synth import generate_frame, load_scenario, perturb_labels
from .warp import bev_similarity, warp_image


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1, not argparse's default 2
        raise _UsageError(message)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except Exception:
        raise _UsageError(f"expected WxH, got {text!r}")


def _parse_point(text: str) -> PlanePoint:
    try:
        x, y = text.split(",")
        return PlanePoint(float(x), float(y))
    except Exception:
        raise _UsageError(f"expected X,Y, got {text!r}")


def _world_ori(h: Homography) -> Homography:
    frames = (h.src_frame, h.dst_frame)
    if frames == ("ori", "world"):
        return h
    if frames == ("world", "ori"):
        return invert(h)
    raise GeometryError(f"homography file must map world<->ori, got {frames}")


def report_json_bytes(report: dict) -> bytes:
    """Deterministic report serialization shared by CLI and tests."""
    return (json.dumps(report, indent=2, sort_keys=True) + "\n").encode()


def _env(name: str, default):
    return os.environ.get(f"BEVCAL_{name}", default)


def build_parser() -> _Parser:
    parser = _Parser(prog="bevcal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate the road-plane homography by DLT")
    p.add_argument("--pairs", required=True, help="correspondence JSON file")
    p.add_argument("--out", required=True, help="output homography JSON (world->ori)")

    p = sub.add_parser("warp", help="warp an image to the bird's-eye view")
    p.add_argument("--image", required=True)
    p.add_argument("--homography", required=True, help="world<->ori homography JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--out-size", required=True, metavar="WxH")
    p.add_argument("--ppm", required=True, type=float, help="BEV pixels per meter")
    p.add_argument("--bev-origin", default="0,0", metavar="X,Y",
                   help="world coordinate at BEV pixel (0,0)")
    p.add_argument("--fill", type=float, default=0.0)
    p.add_argument("--interp", choices=["nearest", "bilinear"], default="bilinear")

    p = sub.add_parser("synth-cameras", help="sample cameras consistent with a homography")
    p.add_argument("--homography", required=True)
    p.add_argument("--center", required=True, metavar="X,Y", help="principal-point sampling center")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth-frames", help="generate synthetic frames with dual-view labels")
    p.add_argument("--spec", required=True, help="scenario JSON")
    p.add_argument("--n-frames", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--camera-seed-base", type=int, default=0)
    p.add_argument("--det-out", help="also write perturbed detections to this directory")
    p.add_argument("--sigma-center", type=float, default=0.0, help="meters")
    p.add_argument("--sigma-angle", type=float, default=0.0, help="radians")
    p.add_argument("--drop-rate", type=float, default=0.0)
    p.add_argument("--spurious-rate", type=float, default=0.0)
    p.add_argument("--perturb-seed", type=int, default=0)

    p = sub.add_parser("eval", help="match detections to ground truth and compute AP")
    p.add_argument("--gt", required=True, help="ground-truth label directory")
    p.add_argument("--det", required=True, help="detection directory")
    p.add_argument("--criterion", default="iou:0.5", help="iou:<t> or center:<t>")
    p.add_argument("--report", required=True, help="output report JSON")

    p = sub.add_parser("serve", help="run the interactive calibration service")
    p.add_argument("--port", type=int, default=int(_env("PORT", 8000)))
    p.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    p.add_argument("--data-dir", default=_env("DATA_DIR", "bevcal-data"))
    p.add_argument("--static-dir", default=_env("STATIC_DIR", None))

    return parser


def cmd_calibrate(args) -> int:
    c = load_correspondences(args.pairs)
    h = estimate_homography_dlt(c)
    save_homography(h, args.out)
    return 0


def cmd_warp(args) -> int:
    out_w, out_h = _parse_size(args.out_size)
    h_world_ori = _world_ori(load_homography(args.homography))
    h_bev_ori = compose(bev_similarity(args.ppm, _parse_point(args.bev_origin)), h_world_ori)
    src = read_image(args.image)
    out = warp_image(src, h_bev_ori, out_w, out_h, fill=args.fill, interp=args.interp)
    write_image(out, args.out)
    return 0


def cmd_synth_cameras(args) -> int:
    h = load_homography(args.homography)
    if (h.src_frame, h.dst_frame) != ("world", "ori"):
        h = invert(_world_ori(h))
    family = sample_camera_family(h, _parse_point(args.center), args.radius, args.n, args.seed)
    docs = [camera_to_dict(k, e, reproduction_residual(h, k, e)) for k, e in family]
    Path(args.out).write_text(json.dumps(docs, indent=2) + "\n")
    return 0


def cmd_synth_frames(args) -> int:
    spec = load_scenario(args.spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    det_dir = Path(args.det_out) if args.det_out else None
    if det_dir:
        det_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i in range(args.n_frames):
        camera_seed = args.camera_seed_base + i
        frame_spec = dataclasses.replace(spec, seed=spec.seed + i)
        frame = generate_frame(frame_spec, camera_seed=camera_seed)
        save_labels(i, list(frame.labels_bev), out_dir / f"frame_{i:05d}.json")
        k, e = frame.camera
        manifest.append(
            {
                "frame": i,
                "camera_seed": camera_seed,
                "placement_seed": frame_spec.seed,
                "camera": camera_to_dict(k, e, reproduction_residual(spec.homography, k, e)),
            }
        )
        if det_dir:
            dets = perturb_labels(
                frame,
                args.sigma_center,
                args.sigma_angle,
                args.drop_rate,
                args.spurious_rate,
                seed=args.perturb_seed + i,
                frame_id=i,
            )
            doc = {
                "frame": i,
                "boxes": [
                    {
                        "cx": d.box.cx,
                        "cy": d.box.cy,
                        "l": d.box.l,
                        "w": d.box.w,
                        "r": d.box.r,
                        "unit": d.box.unit,
                        "confidence": d.confidence,
                    }
                    for d in dets
                ],
            }
            (det_dir / f"frame_{i:05d}.json").write_text(json.dumps(doc, indent=2) + "\n")
    (out_dir / "cameras.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


def _load_detections(path: Path):
    from .evaluation import Detection

    doc = json.loads(path.read_text())
    dets = [
        Detection(
            box=RBox(
                cx=float(b["cx"]),
                cy=float(b["cy"]),
                l=float(b["l"]),
                w=float(b["w"]),
                r=float(b["r"]),
                unit=b.get("unit", "bev_px"),
            ),
            confidence=float(b["confidence"]),
            frame_id=doc["frame"],
        )
        for b in doc["boxes"]
    ]
    return doc["frame"], dets


def cmd_eval(args) -> int:
    crit = MatchCriterion.parse(args.criterion)
    gt_dir, det_dir = Path(args.gt), Path(args.det)
    triples = []
    for gt_path in sorted(gt_dir.glob("frame_*.json")):
        frame_id, gts = labels_from_dict(json.loads(gt_path.read_text()))
        det_path = det_dir / gt_path.name
        if det_path.exists():
            _, dets = _load_detections(det_path)
        else:
            dets = []
        triples.append((frame_id, dets, [t.box for t in gts]))
    if not triples:
        raise GeometryError(f"no ground-truth label files in {gt_dir}")
    frames = match_dataset(triples, crit)
    report = evaluation_report(frames, crit)
    Path(args.report).write_bytes(report_json_bytes(report))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir, args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "warp": cmd_warp,
    "synth-cameras": cmd_synth_cameras,
    "synth-frames": cmd_synth_frames,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GeometryError, OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
