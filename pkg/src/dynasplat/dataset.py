"""Dataset ingestion: transforms.json convention with a per-frame "time".

Layout of a dataset directory:
    transforms_train.json   required
    transforms_test.json    optional
    points3d.bin            optional seed point cloud
    <file_path>.png         one image per frame

Each transforms file holds ``camera_angle_x`` and ``frames`` with
``file_path``, ``transform_matrix`` (camera-to-world, OpenGL axes: y up,
z backward) and ``time``. Times across both splits are min-max normalized
to [0, 1].
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .camera import Camera
from .errors import FormatError
from .imageio import read_png

GL_TO_CV = np.diag([1.0, -1.0, -1.0])


@dataclass
class Frame:
    camera: Camera
    time: float
    pixels: np.ndarray | None
    split: str
    file_path: str = ""


class Dataset:
    def __init__(self, frames, seed_points=None, seed_colors=None,
                 camera_angle_x=None):
        self.frames = list(frames)
        self.seed_points = seed_points
        self.seed_colors = seed_colors
        self.camera_angle_x = camera_angle_x

    def train_frames(self):
        return [f for f in self.frames if f.split == "train"]

    def test_frames(self):
        return [f for f in self.frames if f.split == "test"]

    def seed_cloud(self):
        if self.seed_points is None or len(self.seed_points) == 0:
            return None
        return self.seed_points, self.seed_colors

    def camera_meta(self) -> dict:
        ref = self.frames[0].camera
        return {"camera_angle_x": float(ref.fov_x),
                "width": ref.width, "height": ref.height}


def c2w_gl_from_w2c(w2c: np.ndarray) -> np.ndarray:
    """Inverse conversion used when writing transforms files."""
    c2w = np.linalg.inv(w2c)
    out = c2w.copy()
    out[:3, 1:3] *= -1.0
    return out


def w2c_from_c2w_gl(c2w_gl: np.ndarray) -> np.ndarray:
    c2w = np.asarray(c2w_gl, dtype=float).reshape(4, 4).copy()
    c2w[:3, 1:3] *= -1.0
    return np.linalg.inv(c2w)


def load_points3d(path) -> tuple[np.ndarray, np.ndarray]:
    """Binary seed cloud: uint32 count, then count * 6 float32 (xyz, rgb)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise IOError(f"points3d file truncated: {path}")
    (count,) = struct.unpack("<I", raw[:4])
    expected = 4 + count * 6 * 4
    if len(raw) < expected:
        raise IOError(f"points3d file truncated: {path} "
                      f"({len(raw)} bytes, expected {expected})")
    data = np.frombuffer(raw[4:expected], dtype="<f4").reshape(count, 6)
    return data[:, :3].astype(float), data[:, 3:].astype(float)


def save_points3d(path, points: np.ndarray, colors: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    colors = np.asarray(colors, dtype=np.float32).reshape(-1, 3)
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(points)))
        f.write(np.hstack([points, colors]).astype("<f4").tobytes())


def _load_split(root, name, split, image_scale):
    path = os.path.join(root, f"transforms_{name}.json")
    if not os.path.exists(path):
        return []
    with open(path) as f:
        try:
            meta = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})")
    if "camera_angle_x" not in meta:
        raise FormatError(f"{path}: missing camera_angle_x")
    fov_x = float(meta["camera_angle_x"])
    frames = []
    for i, fr in enumerate(meta.get("frames", [])):
        if "time" not in fr:
            raise FormatError(
                f"{path}: frame {i} ({fr.get('file_path', '?')}) missing 'time'")
        file_path = fr["file_path"]
        img_path = os.path.join(root, file_path)
        if not os.path.splitext(img_path)[1]:
            img_path += ".png"
        try:
            pixels = read_png(img_path)
        except FileNotFoundError:
            raise IOError(f"cannot read frame image: {img_path}")
        except Image.UnidentifiedImageError:
            raise IOError(f"cannot decode frame image: {img_path}")
        if image_scale != 1.0:
            h, w = pixels.shape[:2]
            nw, nh = max(1, round(w * image_scale)), max(1, round(h * image_scale))
            im = Image.fromarray(np.rint(pixels * 255).astype(np.uint8))
            pixels = np.asarray(im.resize((nw, nh), Image.BILINEAR), dtype=float) / 255.0
        h, w = pixels.shape[:2]
        w2c = w2c_from_c2w_gl(np.asarray(fr["transform_matrix"], dtype=float))
        camera = Camera.from_fov_x(fov_x, w, h, w2c)
        frames.append(Frame(camera=camera, time=float(fr["time"]),
                            pixels=pixels, split=split, file_path=file_path))
    return frames


def load_dataset(root, image_scale: float = 1.0) -> Dataset:
    """Read a dataset directory; see module docstring for the layout."""
    train = _load_split(root, "train", "train", image_scale)
    if not train:
        raise FormatError(f"{root}: transforms_train.json missing or empty")
    test = _load_split(root, "test", "test", image_scale)
    frames = train + test

    times = np.array([f.time for f in frames])
    t_min, t_max = times.min(), times.max()
    span = t_max - t_min
    for f in frames:
        f.time = float((f.time - t_min) / span) if span > 0 else 0.0

    seed_points = seed_colors = None
    cloud_path = os.path.join(root, "points3d.bin")
    if os.path.exists(cloud_path):
        seed_points, seed_colors = load_points3d(cloud_path)

    return Dataset(frames, seed_points, seed_colors,
                   camera_angle_x=frames[0].camera.fov_x)
