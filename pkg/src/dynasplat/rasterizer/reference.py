"""Brute-force renderer used as the correctness oracle for the tile path.

No tiles, no binning: every pixel composites the full depth-sorted splat
list with the identical alpha / cutoff / termination rules as the tile
renderer. The walk over splats is sequential; work is vectorized across
pixels only, which does not change per-pixel float semantics.
"""

from __future__ import annotations

import numpy as np

from ..camera import Camera
from ..core_math import sh_evaluate_batch
from .constants import ALPHA_CLAMP, ALPHA_SKIP, POWER_CUTOFF, T_TERMINATE
from .projection import project_batch


def reference_render(positions, rotations, log_scales, opacity_logits, sh_coeffs,
                     camera: Camera, background, sh_view_positions=None) -> np.ndarray:
    """Render by exact per-pixel compositing over all depth-sorted splats."""
    background = np.asarray(background, dtype=float).reshape(3)
    cache, _ = project_batch(positions, rotations, log_scales, opacity_logits, camera)

    sh_pos = np.asarray(positions, dtype=float).reshape(-1, 3) \
        if sh_view_positions is None else np.asarray(sh_view_positions, dtype=float).reshape(-1, 3)
    offsets = sh_pos[cache.visible] - camera.center
    dist = np.linalg.norm(offsets, axis=1, keepdims=True)
    dirs = offsets / np.maximum(dist, 1e-12)
    coeffs = np.asarray(sh_coeffs, dtype=float)[cache.visible]
    degree = int(round(np.sqrt(coeffs.shape[1]))) - 1 if coeffs.size else 0
    rgb, _ = sh_evaluate_batch(coeffs, dirs, degree)

    order = np.lexsort((np.arange(len(cache.depth)), cache.depth))
    H, W = camera.height, camera.width
    px = np.arange(W, dtype=float)[None, :]
    py = np.arange(H, dtype=float)[:, None]

    T = np.ones((H, W))
    alive = np.ones((H, W), dtype=bool)
    color = np.zeros((H, W, 3))
    for i in order:
        dx = px - cache.mean2d[i, 0]
        dy = py - cache.mean2d[i, 1]
        a, b, c = cache.conic[i]
        power = 0.5 * (a * dx * dx + c * dy * dy) + b * dx * dy
        alpha = np.minimum(ALPHA_CLAMP, cache.alpha_base[i] * np.exp(-power))
        alpha[(power > POWER_CUTOFF) | (power < 0.0) | (alpha < ALPHA_SKIP)] = 0.0
        t_next = T * (1.0 - alpha)
        # a splat that would push T below the floor is not composited and
        # ends the walk for that pixel
        alive &= t_next >= T_TERMINATE
        w = np.where(alive, alpha * T, 0.0)
        color += w[:, :, None] * rgb[i]
        T = np.where(alive, t_next, T)
    return color + T[:, :, None] * background
