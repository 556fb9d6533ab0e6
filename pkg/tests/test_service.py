import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from conftest import random_gaussian_set
from dynasplat.deformation import DeformationField
from dynasplat.service import render_png_bytes, serve_in_thread, service_meta
from dynasplat.snapshot import load_snapshot, save_snapshot
from dynasplat.training import Scene, TrainConfig


@pytest.fixture(scope="module")
def served():
    rng = np.random.default_rng(2)
    field = DeformationField(l_x=2, l_t=2, depth=2, width=4, skip_at=2,
                             rng=np.random.default_rng(0))
    scene = Scene(random_gaussian_set(rng, 12), random_gaussian_set(rng, 5),
                  field, scene_extent=4.0)
    header = {"camera": {"camera_angle_x": 1.0, "width": 48, "height": 48},
              "train_config": TrainConfig().to_dict()}
    server, base = serve_in_thread(scene, header, port=0)
    yield scene, header, base
    server.shutdown()


def _get(url):
    with urllib.request.urlopen(url, timeout=10) as r:
        return r.status, r.read(), r.headers.get("Content-Type")


def _pose_query():
    from dynasplat.camera import look_at_w2c
    w2c = look_at_w2c(np.array([0.0, -4.0, 1.0]), np.zeros(3))
    return ",".join(repr(float(x)) for x in w2c.reshape(-1)), w2c


def test_healthz(served):
    _, _, base = served
    status, body, _ = _get(f"{base}/healthz")
    assert status == 200
    assert body == b"ok"


def test_meta_schema(served):
    scene, header, base = served
    status, body, ctype = _get(f"{base}/meta")
    assert status == 200
    assert ctype == "application/json"
    meta = json.loads(body)
    assert set(meta) == {"resolution", "time_range", "scene_extent",
                         "suggested_orbit_center", "gaussian_counts"}
    assert meta["time_range"] == [0.0, 1.0]
    assert meta["gaussian_counts"] == {"deformable": 12, "static": 5}
    assert meta["resolution"] == {"width": 48, "height": 48}
    assert len(meta["suggested_orbit_center"]) == 3
    assert meta == service_meta(scene, header)


def test_render_matches_local_encoding(served):
    scene, header, base = served
    pose_q, w2c = _pose_query()
    status, body, ctype = _get(f"{base}/render?pose={pose_q}&t=0.25&w=32&h=32")
    assert status == 200
    assert ctype == "image/png"
    local = render_png_bytes(scene, header, w2c.reshape(-1), 0.25, 32, 32)
    assert body == local


def test_render_wrong_pose_length(served):
    _, _, base = served
    pose_q, _ = _pose_query()
    short = ",".join(pose_q.split(",")[:15])
    with pytest.raises(urllib.error.HTTPError) as e:
        _get(f"{base}/render?pose={short}&t=0.5&w=16&h=16")
    assert e.value.code == 400
    assert "pose" in json.loads(e.value.read())["error"]


def test_render_bad_time(served):
    _, _, base = served
    pose_q, _ = _pose_query()
    with pytest.raises(urllib.error.HTTPError) as e:
        _get(f"{base}/render?pose={pose_q}&t=abc&w=16&h=16")
    assert e.value.code == 400


def test_unknown_path_404(served):
    _, _, base = served
    with pytest.raises(urllib.error.HTTPError) as e:
        _get(f"{base}/nope")
    assert e.value.code == 404


def test_concurrent_identical_requests_identical_bytes(served):
    _, _, base = served
    pose_q, _ = _pose_query()
    url = f"{base}/render?pose={pose_q}&t=0.75&w=24&h=24"
    results = [None] * 6

    def fetch(i):
        results[i] = _get(url)[1]

    threads = [threading.Thread(target=fetch, args=(i,)) for i in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == results[0] for r in results)


def test_time_clamped(served):
    scene, header, base = served
    pose_q, w2c = _pose_query()
    _, over, _ = _get(f"{base}/render?pose={pose_q}&t=5.0&w=16&h=16")
    local = render_png_bytes(scene, header, w2c.reshape(-1), 1.0, 16, 16)
    assert over == local


def test_size_capped(served):
    scene, header, base = served
    pose_q, w2c = _pose_query()
    status, body, _ = _get(f"{base}/render?pose={pose_q}&t=0&w=99999&h=8")
    assert status == 200
    local = render_png_bytes(scene, header, w2c.reshape(-1), 0.0, 1024, 8)
    assert body == local
