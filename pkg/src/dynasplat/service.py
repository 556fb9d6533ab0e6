"""HTTP render service over an immutable snapshot.

Endpoints:
    GET /healthz -> 200 "ok"
    GET /meta    -> JSON {resolution, time_range, scene_extent,
                          suggested_orbit_center, gaussian_counts}
    GET /render?pose=<16 csv floats>&t=<float>&w=<int>&h=<int> -> image/png

The pose is a row-major world-to-camera matrix; t is clamped to [0, 1];
w and h are capped at 1024. Requests are stateless and identical requests
return identical bytes.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .camera import Camera
from .errors import ConfigError
from .imageio import encode_png
from .training import Scene, render_scene

MAX_DIM = 1024
DEFAULT_FOV_X = 1.0


def render_png_bytes(scene: Scene, header: dict, pose, t, width, height) -> bytes:
    """Shared by the CLI `render` command and the /render endpoint."""
    pose = np.asarray(pose, dtype=float)
    if pose.size != 16:
        raise ConfigError(f"pose must have 16 floats, got {pose.size}")
    width = max(1, min(int(width), MAX_DIM))
    height = max(1, min(int(height), MAX_DIM))
    t = min(max(float(t), 0.0), 1.0)
    meta = header.get("camera") or {}
    fov_x = float(meta.get("camera_angle_x", DEFAULT_FOV_X))
    camera = Camera.from_fov_x(fov_x, width, height, pose.reshape(4, 4))
    cfg = header.get("train_config") or {}
    background = np.asarray(cfg.get("background", (1.0, 1.0, 1.0)), dtype=float)
    out = render_scene(scene, camera, t, background)
    return encode_png(out.image)


def service_meta(scene: Scene, header: dict) -> dict:
    meta = header.get("camera") or {}
    positions = np.concatenate([scene.deformable.positions, scene.static.positions]) \
        if len(scene.static) else scene.deformable.positions
    center = positions.mean(axis=0) if len(positions) else np.zeros(3)
    return {
        "resolution": {"width": int(meta.get("width", 800)),
                       "height": int(meta.get("height", 800))},
        "time_range": [0.0, 1.0],
        "scene_extent": float(scene.scene_extent),
        "suggested_orbit_center": [float(x) for x in center],
        "gaussian_counts": {"deformable": len(scene.deformable),
                            "static": len(scene.static)},
    }


def make_server(scene: Scene, header: dict, port: int = 0,
                host: str = "127.0.0.1") -> ThreadingHTTPServer:
    meta_payload = json.dumps(service_meta(scene, header)).encode("utf-8")

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, code, body, content_type):
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code, message):
            self._send(code, json.dumps({"error": message}).encode("utf-8"),
                       "application/json")

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/healthz":
                self._send(200, b"ok", "text/plain")
                return
            if url.path == "/meta":
                self._send(200, meta_payload, "application/json")
                return
            if url.path == "/render":
                params = parse_qs(url.query)
                try:
                    pose_raw = params.get("pose", [""])[0]
                    pose = [float(x) for x in pose_raw.split(",") if x != ""]
                    if len(pose) != 16:
                        self._error(400, f"pose must have 16 floats, got {len(pose)}")
                        return
                    t = float(params.get("t", ["0"])[0])
                    w = int(params.get("w", ["256"])[0])
                    h = int(params.get("h", ["256"])[0])
                except ValueError as e:
                    self._error(400, f"malformed query parameter: {e}")
                    return
                try:
                    png = render_png_bytes(scene, header, pose, t, w, h)
                except (ConfigError, ValueError) as e:
                    self._error(400, str(e))
                    return
                self._send(200, png, "image/png")
                return
            self._error(404, f"unknown path {url.path}")

    return ThreadingHTTPServer((host, port), Handler)


def serve(scene: Scene, header: dict, port: int, host: str = "127.0.0.1"):
    """Run the service until interrupted."""
    server = make_server(scene, header, port=port, host=host)
    print(f"serving on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def serve_in_thread(scene: Scene, header: dict, port: int = 0,
                    host: str = "127.0.0.1"):
    """Start the service on a daemon thread; returns (server, base_url)."""
    server = make_server(scene, header, port=port, host=host)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{host}:{server.server_address[1]}"
