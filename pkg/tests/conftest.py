import numpy as np
import pytest

from dynasplat.camera import Camera, look_at_w2c
from dynasplat.core_math import inverse_sigmoid
from dynasplat.gaussians import GaussianSet


def random_gaussian_set(rng, n, spread=1.0, scale_range=(0.05, 0.3),
                        opacity_range=(0.2, 0.9), sh_degree=1, sh_scale=0.3):
    """Seeded random scene used across rasterizer tests.

    Opacities stay below the 0.99 clamp so finite differences remain valid.
    """
    k = (sh_degree + 1) ** 2
    rot = rng.normal(size=(n, 4))
    rot /= np.linalg.norm(rot, axis=1, keepdims=True)
    return GaussianSet(
        rng.uniform(-spread, spread, (n, 3)),
        rot,
        np.log(rng.uniform(*scale_range, size=(n, 3))),
        inverse_sigmoid(rng.uniform(*opacity_range, size=n)),
        rng.normal(scale=sh_scale, size=(n, k, 3)),
    )


def orbit_camera(width=64, height=64, radius=4.0, azimuth=0.0, height_z=1.0,
                 fov_x=1.0):
    eye = np.array([radius * np.cos(azimuth), radius * np.sin(azimuth), height_z])
    return Camera.from_fov_x(fov_x, width, height, look_at_w2c(eye, np.zeros(3)))


def central_difference(f, x, h=1e-5):
    """Scalar central difference of a 1-argument callable."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
