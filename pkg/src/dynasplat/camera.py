"""Pinhole camera with a rigid world-to-camera transform.

Camera space is x right, y down, z forward; a point projects to pixel
coordinates u = fx*x/z + cx, v = fy*y/z + cy. Pixel (ix, iy) samples the
image plane at exactly (float(ix), float(iy)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray  # 4x4 rigid transform
    width: int
    height: int

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera, dtype=float).reshape(4, 4)
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError("focal lengths must be positive")
        R = self.world_to_camera[:3, :3]
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-9:
            raise ConfigError("world_to_camera rotation block is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera origin in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def from_fov_x(cls, fov_x: float, width: int, height: int,
                   world_to_camera: np.ndarray) -> "Camera":
        fx = 0.5 * width / np.tan(0.5 * fov_x)
        return cls(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                   world_to_camera=world_to_camera, width=width, height=height)

    @property
    def fov_x(self) -> float:
        return 2.0 * np.arctan(0.5 * self.width / self.fx)


def look_at_w2c(eye: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera matrix for a camera at ``eye`` looking at ``target``.

    Camera axes: z forward (toward target), x right, y down.
    """
    eye = np.asarray(eye, dtype=float)
    forward = np.asarray(target, dtype=float) - eye
    fn = np.linalg.norm(forward)
    if fn < 1e-12:
        raise ConfigError("look_at: eye and target coincide")
    forward = forward / fn
    up = np.asarray(up, dtype=float)
    right = np.cross(forward, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        # forward parallel to up; pick any perpendicular right axis
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
        rn = np.linalg.norm(right)
        if rn < 1e-9:
            right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
            rn = np.linalg.norm(right)
    right = right / rn
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])  # rows: camera axes in world coords
    t = -R @ eye
    w2c = np.eye(4)
    w2c[:3, :3] = R
    w2c[:3, 3] = t
    return w2c
