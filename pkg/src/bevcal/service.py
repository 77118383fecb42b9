"""Interactive calibration sessions over HTTP.

Each session owns a camera image, a map image with metric scale, and a
correspondence list; every mutation bumps a revision counter and
responses state the revision they were computed from. The service
computes nothing the library cannot: handlers snapshot session state
under a per-session lock and call the same estimation, recovery, and
warping functions the CLI uses. Calibration failure modes (insufficient
points, degeneracy, imaginary focal) are domain outcomes reported with
HTTP 200 and a status field, not transport errors.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .camera import Intrinsics, focal_from_vps, recover_extrinsics, vanishing_points
from .errors import (
    DegenerateConfiguration,
    GeometryError,
    ImaginaryFocal,
    NumericalFailure,
    TooFewPoints,
    VanishingAtInfinity,
)
from .projective import (
    CorrespondencePair,
    CorrespondenceSet,
    PlanePoint,
    compose,
    estimate_homography_dlt,
    homography_to_dict,
    invert,
    reprojection_report,
)
from .raster import read_image
from .warp import bev_similarity, warp_image


class CreateSessionBody(BaseModel):
    name: str = Field(min_length=1)


class PairBody(BaseModel):
    map_px: tuple[float, float]
    image_px: tuple[float, float]
    label: str | None = None


class PairListBody(BaseModel):
    pairs: list[PairBody]


class SessionNotFound(Exception):
    def __init__(self, session_id: str):
        self.session_id = session_id


class SessionState:
    """Disk-backed session: meta.json plus the two uploaded images.

    meta layout: {"name", "revision", "map_scale", "map_origin", "pairs"};
    world coordinates are derived from map clicks as origin + scale * px.
    """

    def __init__(self, root: Path):
        self.root = root
        self.lock = threading.Lock()

    def read_meta(self) -> dict:
        return json.loads((self.root / "meta.json").read_text())

    def write_meta(self, meta: dict) -> None:
        (self.root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    def camera_image_path(self) -> Path:
        return self.root / "camera.png"

    def map_image_path(self) -> Path:
        return self.root / "map.png"


class SessionStore:
    """One directory per session under data_dir; sessions survive restarts."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, SessionState] = {}
        self._store_lock = threading.Lock()

    def create(self, name: str) -> tuple[str, SessionState]:
        session_id = uuid.uuid4().hex[:12]
        root = self.data_dir / session_id
        root.mkdir(parents=True)
        state = SessionState(root)
        state.write_meta(
            {"name": name, "revision": 0, "map_scale": None, "map_origin": None, "pairs": []}
        )
        with self._store_lock:
            self._sessions[session_id] = state
        return session_id, state

    def get(self, session_id: str) -> SessionState | None:
        with self._store_lock:
            state = self._sessions.get(session_id)
        if state is not None:
            return state
        root = self.data_dir / session_id
        if not (root / "meta.json").exists():
            return None
        state = SessionState(root)
        with self._store_lock:
            self._sessions.setdefault(session_id, state)
            return self._sessions[session_id]


def _correspondences(meta: dict) -> CorrespondenceSet:
    scale = meta["map_scale"]
    origin = meta["map_origin"]
    if scale is None or origin is None:
        raise DegenerateConfiguration("map scale/origin not set")
    return CorrespondenceSet(
        CorrespondencePair(
            world=PlanePoint(
                origin[0] + scale * p["map_px"][0], origin[1] + scale * p["map_px"][1]
            ),
            image=PlanePoint(*p["image_px"]),
            label=p.get("label"),
        )
        for p in meta["pairs"]
    )


def _calibration_payload(meta: dict) -> dict:
    """Run estimation on a meta snapshot; domain failures become statuses."""
    revision = meta["revision"]
    if len(meta["pairs"]) < 4:
        return {
            "status": "insufficient_points",
            "revision": revision,
            "n_pairs": len(meta["pairs"]),
        }
    try:
        c = _correspondences(meta)
        h_ori_world = estimate_homography_dlt(c)
    except TooFewPoints:
        return {
            "status": "insufficient_points",
            "revision": revision,
            "n_pairs": len(meta["pairs"]),
        }
    except (DegenerateConfiguration, NumericalFailure) as exc:
        return {"status": "degenerate", "revision": revision, "message": str(exc)}
    report = reprojection_report(h_ori_world, c)
    return {
        "status": "ok",
        "revision": revision,
        "H_world_ori": homography_to_dict(invert(h_ori_world)),
        "residuals_px": list(report.residuals),
        "rms": report.rms,
        "max": report.max,
    }


def create_app(data_dir: str | Path, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="bevcal calibration service")
    store = SessionStore(Path(data_dir))

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        details = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": details})

    @app.exception_handler(SessionNotFound)
    async def session_missing_handler(request: Request, exc: SessionNotFound):
        return JSONResponse(
            status_code=404, content={"detail": f"unknown session {exc.session_id}"}
        )

    def session_or_404(session_id: str) -> SessionState:
        state = store.get(session_id)
        if state is None:
            raise SessionNotFound(session_id)
        return state

    @app.post("/api/sessions")
    def create_session(body: CreateSessionBody):
        session_id, _ = store.create(body.name)
        return {"id": session_id, "revision": 0}

    @app.put("/api/sessions/{session_id}/images", status_code=204)
    async def put_images(
        session_id: str,
        camera: UploadFile = File(...),
        map_image: UploadFile = File(..., alias="map"),
        map_scale: float = Form(...),
        map_origin_x: float = Form(...),
        map_origin_y: float = Form(...),
    ):
        state = session_or_404(session_id)
        camera_bytes = await camera.read()
        map_bytes = await map_image.read()
        with state.lock:
            state.camera_image_path().write_bytes(camera_bytes)
            state.map_image_path().write_bytes(map_bytes)
            try:
                read_image(state.camera_image_path())
                read_image(state.map_image_path())
            except Exception as exc:
                raise RequestValidationError(
                    [
                        {
                            "loc": ("body", "camera"),
                            "msg": f"undecodable image: {exc}",
                            "type": "value_error",
                        }
                    ]
                )
            meta = state.read_meta()
            meta["map_scale"] = map_scale
            meta["map_origin"] = [map_origin_x, map_origin_y]
            meta["revision"] += 1
            state.write_meta(meta)
        return Response(status_code=204)

    @app.put("/api/sessions/{session_id}/correspondences")
    def put_correspondences(session_id: str, body: PairListBody):
        state = session_or_404(session_id)
        with state.lock:
            meta = state.read_meta()
            meta["pairs"] = [
                {
                    "map_px": list(p.map_px),
                    "image_px": list(p.image_px),
                    **({"label": p.label} if p.label is not None else {}),
                }
                for p in body.pairs
            ]
            meta["revision"] += 1
            state.write_meta(meta)
            revision = meta["revision"]
        return {"revision": revision}

    @app.get("/api/sessions/{session_id}/calibration")
    def get_calibration(session_id: str):
        state = session_or_404(session_id)
        with state.lock:
            meta = state.read_meta()
        return _calibration_payload(meta)

    @app.get("/api/sessions/{session_id}/bev-preview")
    def bev_preview(
        session_id: str,
        ppm: float,
        w: int = 800,
        h: int = 800,
        ox: float = 0.0,
        oy: float = 0.0,
    ):
        state = session_or_404(session_id)
        with state.lock:
            meta = state.read_meta()
            has_camera = state.camera_image_path().exists()
        payload = _calibration_payload(meta)
        if payload["status"] != "ok" or not has_camera:
            return JSONResponse(
                status_code=404,
                content={
                    "detail": "session is not calibrated"
                    if has_camera
                    else "no camera image uploaded",
                    "status": payload["status"] if has_camera else "no_image",
                    "revision": meta["revision"],
                },
            )
        c = _correspondences(meta)
        h_ori_world = estimate_homography_dlt(c)
        h_bev_ori = compose(bev_similarity(ppm, PlanePoint(ox, oy)), invert(h_ori_world))
        src = read_image(state.camera_image_path())
        out = warp_image(src, h_bev_ori, w, h, fill=0, interp="bilinear")
        arr = out.data[:, :, 0] if out.channels == 1 else out.data
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        return Response(
            content=buf.getvalue(),
            media_type="image/png",
            headers={"X-Bevcal-Revision": str(meta["revision"])},
        )

    @app.get("/api/sessions/{session_id}/camera")
    def recovered_camera(session_id: str, px: float, py: float):
        state = session_or_404(session_id)
        with state.lock:
            meta = state.read_meta()
        payload = _calibration_payload(meta)
        if payload["status"] != "ok":
            return {"status": payload["status"], "revision": meta["revision"]}
        c = _correspondences(meta)
        h_ori_world = estimate_homography_dlt(c)
        try:
            vp = vanishing_points(h_ori_world)
            f = focal_from_vps(vp, PlanePoint(px, py))
            k = Intrinsics(f=f, px=px, py=py)
            e = recover_extrinsics(h_ori_world, k)
        except ImaginaryFocal:
            return {"status": "imaginary_focal", "revision": meta["revision"]}
        except VanishingAtInfinity:
            return {"status": "vanishing_at_infinity", "revision": meta["revision"]}
        except GeometryError as exc:
            return {"status": "error", "message": str(exc), "revision": meta["revision"]}
        return {
            "status": "ok",
            "revision": meta["revision"],
            "f": k.f,
            "px": k.px,
            "py": k.py,
            "R": e.r.tolist(),
            "t": e.t.tolist(),
        }

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
