"""Synthetic ground-truth scenes with closed-form time-varying attributes.

Three motion programs at desk scale:
  two-cluster      a static Gaussian cluster plus a rigidly oscillating one;
                   the static cluster doubles as the seed point cloud (the
                   stand-in for an SfM prior that only sees static regions)
  pulsating-scale  a blob whose per-Gaussian scales pulse sinusoidally
  rigid-orbit      an anisotropic blob rotating rigidly about the z axis

Train/test images are rendered with the brute-force reference renderer and
written in the transforms.json layout that ``load_dataset`` reads. The full
ground-truth parameter record lands next to them as ground_truth.json.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, look_at_w2c
from .core_math import SH_C0, inverse_sigmoid, quat_multiply
from .dataset import Dataset, c2w_gl_from_w2c, load_dataset, save_points3d
from .errors import ConfigError
from .imageio import write_png
from .rasterizer import reference_render

PROGRAMS = ("two-cluster", "pulsating-scale", "rigid-orbit")


@dataclass
class SyntheticSpec:
    program: str = "two-cluster"
    n_static: int = 20
    n_dynamic: int = 20
    n_train: int = 60
    n_test: int = 10
    width: int = 64
    height: int = 64
    fov_x: float = 1.0
    orbit_radius: float = 3.2
    orbit_height: float = 0.9
    background: tuple = (1.0, 1.0, 1.0)


def _colors(rng, n):
    return rng.uniform(0.15, 0.9, size=(n, 3))


def _dc_from_rgb(rgb, k):
    sh = np.zeros((len(rgb), k, 3))
    sh[:, 0, :] = (rgb - 0.5) / SH_C0
    return sh


def _identity_quats(n):
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    return q


def _quat_about_z(angle):
    return np.array([np.cos(angle / 2.0), 0.0, 0.0, np.sin(angle / 2.0)])


class GroundTruthScene:
    """Closed-form attribute functions reconstructed from a plain record."""

    def __init__(self, record: dict):
        self.record = record
        self.program = record["program"]
        self._arr = {k: np.asarray(v, dtype=float) for k, v in record["arrays"].items()}

    def gaussians_at(self, t: float):
        """Arrays (positions, rotations, log_scales, opacity_logits, sh) at t."""
        a = self._arr
        program = self.program
        if program == "two-cluster":
            dyn_pos = a["dyn_positions"] + np.sin(2 * np.pi * t) * a["dyn_amplitude"]
            positions = np.concatenate([a["static_positions"], dyn_pos])
            rotations = np.concatenate([a["static_rotations"], a["dyn_rotations"]])
            log_scales = np.concatenate([a["static_log_scales"], a["dyn_log_scales"]])
            opacities = np.concatenate([a["static_opacity_logits"], a["dyn_opacity_logits"]])
            sh = np.concatenate([a["static_sh"], a["dyn_sh"]])
        elif program == "pulsating-scale":
            positions = a["positions"]
            rotations = a["rotations"]
            log_scales = a["log_scales"] + a["pulse_amplitude"] * np.sin(2 * np.pi * t)
            opacities = a["opacity_logits"]
            sh = a["sh"]
        elif program == "rigid-orbit":
            angle = 0.5 * np.pi * t
            c, s = np.cos(angle), np.sin(angle)
            Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            positions = a["positions"] @ Rz.T
            rotations = quat_multiply(
                np.broadcast_to(_quat_about_z(angle), a["rotations"].shape),
                a["rotations"])
            log_scales = a["log_scales"]
            opacities = a["opacity_logits"]
            sh = a["sh"]
        else:
            raise ConfigError(f"unknown motion program {program!r}")
        return positions, rotations, log_scales, opacities, sh

    def render(self, camera: Camera, t: float, background) -> np.ndarray:
        p, q, s, o, sh = self.gaussians_at(t)
        return reference_render(p, q, s, o, sh, camera, background)

    def static_centroid(self) -> np.ndarray | None:
        if self.program == "two-cluster":
            return self._arr["static_positions"].mean(axis=0)
        return None


def _build_ground_truth(spec: SyntheticSpec, rng) -> GroundTruthScene:
    k = 4  # SH degree 1 layout; bands above DC stay zero
    if spec.program == "two-cluster":
        ns, nd = spec.n_static, spec.n_dynamic
        static_pos = np.array([-0.7, 0.0, 0.0]) + 0.25 * rng.standard_normal((ns, 3))
        dyn_pos = np.array([0.7, 0.0, 0.0]) + 0.25 * rng.standard_normal((nd, 3))
        axis = np.array([0.0, 1.0, 0.35])
        axis = axis / np.linalg.norm(axis)
        arrays = {
            "static_positions": static_pos,
            "static_rotations": _identity_quats(ns),
            "static_log_scales": np.log(rng.uniform(0.07, 0.13, size=(ns, 1))) * np.ones((1, 3)),
            "static_opacity_logits": inverse_sigmoid(rng.uniform(0.6, 0.9, size=ns)),
            "static_sh": _dc_from_rgb(_colors(rng, ns), k),
            "dyn_positions": dyn_pos,
            "dyn_rotations": _identity_quats(nd),
            "dyn_log_scales": np.log(rng.uniform(0.07, 0.13, size=(nd, 1))) * np.ones((1, 3)),
            "dyn_opacity_logits": inverse_sigmoid(rng.uniform(0.6, 0.9, size=nd)),
            "dyn_sh": _dc_from_rgb(_colors(rng, nd), k),
            "dyn_amplitude": 0.35 * axis[None, :] * np.ones((nd, 1)),
        }
        seed_points = static_pos
        seed_colors = SH_C0 * arrays["static_sh"][:, 0, :] + 0.5
    elif spec.program == "pulsating-scale":
        # fully dynamic scene: the stand-in SfM prior sees nothing static,
        # so the emitted seed cloud is empty. Few large dark blobs against
        # the white background, pulsing with a volume-trading squash-and-
        # stretch (axes move in opposite directions) that only the
        # scale-deformation pathway can express.
        n = spec.n_dynamic
        pos = 0.55 * rng.standard_normal((n, 3))
        arrays = {
            "positions": pos,
            "rotations": _identity_quats(n),
            "log_scales": np.log(rng.uniform(0.18, 0.24, size=(n, 1))) * np.ones((1, 3)),
            "opacity_logits": inverse_sigmoid(rng.uniform(0.75, 0.9, size=n)),
            "sh": _dc_from_rgb(rng.uniform(0.05, 0.5, size=(n, 3)), k),
            "pulse_amplitude": np.tile([0.9, -0.55, 0.9], (n, 1)),
        }
        seed_points = np.zeros((0, 3))
        seed_colors = np.zeros((0, 3))
    elif spec.program == "rigid-orbit":
        n = spec.n_dynamic
        pos = np.array([0.6, 0.0, 0.0]) + 0.3 * rng.standard_normal((n, 3))
        base_scales = np.stack([
            np.log(rng.uniform(0.14, 0.2, size=n)),
            np.log(rng.uniform(0.05, 0.08, size=n)),
            np.log(rng.uniform(0.05, 0.08, size=n)),
        ], axis=1)
        arrays = {
            "positions": pos,
            "rotations": _identity_quats(n),
            "log_scales": base_scales,
            "opacity_logits": inverse_sigmoid(rng.uniform(0.6, 0.9, size=n)),
            "sh": _dc_from_rgb(_colors(rng, n), k),
        }
        seed_points = pos
        seed_colors = SH_C0 * arrays["sh"][:, 0, :] + 0.5
    else:
        raise ConfigError(
            f"unknown motion program {spec.program!r}; choose from {PROGRAMS}")

    record = {
        "program": spec.program,
        "background": list(spec.background),
        "arrays": {key: val.tolist() for key, val in arrays.items()},
        "seed_points": seed_points.tolist(),
        "seed_colors": np.clip(seed_colors, 0.0, 1.0).tolist(),
    }
    return GroundTruthScene(record)


def _orbit_camera(spec: SyntheticSpec, azimuth: float) -> Camera:
    eye = np.array([
        spec.orbit_radius * np.cos(azimuth),
        spec.orbit_radius * np.sin(azimuth),
        spec.orbit_height,
    ])
    w2c = look_at_w2c(eye, np.zeros(3))
    return Camera.from_fov_x(spec.fov_x, spec.width, spec.height, w2c)


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir):
    """Create the dataset on disk; returns (Dataset, GroundTruthScene)."""
    if spec.program not in PROGRAMS:
        raise ConfigError(
            f"unknown motion program {spec.program!r}; choose from {PROGRAMS}")
    rng = np.random.default_rng(seed)
    gt = _build_ground_truth(spec, rng)

    os.makedirs(out_dir, exist_ok=True)
    for sub in ("train", "test"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    splits = {
        "train": [(i / max(spec.n_train - 1, 1),
                   2 * np.pi * i / spec.n_train) for i in range(spec.n_train)],
        "test": [((j + 0.5) / spec.n_test,
                  2 * np.pi * (j + 0.5) / spec.n_test) for j in range(spec.n_test)],
    }
    for split, entries in splits.items():
        frames_meta = []
        for i, (t, azimuth) in enumerate(entries):
            camera = _orbit_camera(spec, azimuth)
            image = gt.render(camera, t, spec.background)
            rel = f"{split}/r_{i:03d}.png"
            write_png(image, os.path.join(out_dir, rel))
            frames_meta.append({
                "file_path": rel,
                "transform_matrix": c2w_gl_from_w2c(camera.world_to_camera).tolist(),
                "time": t,
            })
        with open(os.path.join(out_dir, f"transforms_{split}.json"), "w") as f:
            json.dump({"camera_angle_x": spec.fov_x, "frames": frames_meta}, f, indent=1)

    save_points3d(os.path.join(out_dir, "points3d.bin"),
                  np.asarray(gt.record["seed_points"]),
                  np.asarray(gt.record["seed_colors"]))
    gt.record["spec"] = {
        "program": spec.program, "n_static": spec.n_static,
        "n_dynamic": spec.n_dynamic, "n_train": spec.n_train,
        "n_test": spec.n_test, "width": spec.width, "height": spec.height,
        "fov_x": spec.fov_x, "orbit_radius": spec.orbit_radius,
        "orbit_height": spec.orbit_height, "seed": seed,
    }
    with open(os.path.join(out_dir, "ground_truth.json"), "w") as f:
        json.dump(gt.record, f)

    return load_dataset(out_dir), gt


def load_ground_truth(out_dir) -> GroundTruthScene:
    with open(os.path.join(out_dir, "ground_truth.json")) as f:
        return GroundTruthScene(json.load(f))
