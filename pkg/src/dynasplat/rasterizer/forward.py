"""Forward tile rasterization: bin projected splats to tiles and composite.

``render`` is the full differentiable path (projection + SH color + sort +
compositing) and retains the caches the backward pass needs.
``rasterize_forward`` composites an already-projected, depth-sorted sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..camera import Camera
from ..core_math import sh_evaluate_batch
from .constants import TILE_SIZE
from .kernels import configure_threads, forward_kernel
from .projection import ProjectionCache, project_batch


@dataclass
class RenderOutput:
    image: np.ndarray            # (H, W, 3) in [0, 1]
    transmittance: np.ndarray    # (H, W) final per-pixel transmittance
    aux: dict | None = None      # backward-pass state; None if not retained


def _tile_bins(mean2d, radius, depth, width, height, tile_size):
    """Assign splats to tiles; returns (tile_starts, tile_gauss, order rank).

    tile_gauss lists splat indices per tile, sorted by ascending depth with
    ties broken by original index.
    """
    m = len(mean2d)
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    n_tiles = tiles_x * tiles_y
    if m == 0:
        return (np.zeros(n_tiles + 1, dtype=np.int64),
                np.zeros(0, dtype=np.int64), tiles_x)

    u, v = mean2d[:, 0], mean2d[:, 1]
    tx0 = np.clip(np.floor((u - radius) / tile_size), 0, tiles_x - 1).astype(np.int64)
    tx1 = np.clip(np.floor((u + radius) / tile_size), 0, tiles_x - 1).astype(np.int64)
    ty0 = np.clip(np.floor((v - radius) / tile_size), 0, tiles_y - 1).astype(np.int64)
    ty1 = np.clip(np.floor((v + radius) / tile_size), 0, tiles_y - 1).astype(np.int64)
    cx = tx1 - tx0 + 1
    counts = cx * (ty1 - ty0 + 1)
    total = int(counts.sum())

    gidx = np.repeat(np.arange(m, dtype=np.int64), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    rep_cx = np.repeat(cx, counts)
    lx = local % rep_cx
    ly = local // rep_cx
    tile_ids = (np.repeat(ty0, counts) + ly) * tiles_x + np.repeat(tx0, counts) + lx

    # global front-to-back order: ascending depth, ties by original index
    rank = np.empty(m, dtype=np.int64)
    rank[np.lexsort((np.arange(m), depth))] = np.arange(m)
    order = np.lexsort((rank[gidx], tile_ids))
    tile_ids = tile_ids[order]
    tile_gauss = gidx[order]
    tile_starts = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(np.bincount(tile_ids, minlength=n_tiles), out=tile_starts[1:])
    return tile_starts, tile_gauss, tiles_x


def _composite(mean2d, conic, alpha_base, rgb, depth, radius, camera, background,
               tile_size):
    configure_threads()
    tile_starts, tile_gauss, tiles_x = _tile_bins(
        mean2d, radius, depth, camera.width, camera.height, tile_size)
    image = np.empty((camera.height, camera.width, 3))
    t_final = np.empty((camera.height, camera.width))
    last_contrib = np.empty((camera.height, camera.width), dtype=np.int64)
    forward_kernel(tile_starts, tile_gauss,
                   np.ascontiguousarray(mean2d), np.ascontiguousarray(conic),
                   np.ascontiguousarray(alpha_base), np.ascontiguousarray(rgb),
                   np.asarray(background, dtype=float),
                   camera.width, camera.height, tile_size, tiles_x,
                   image, t_final, last_contrib)
    return image, t_final, last_contrib, tile_starts, tile_gauss, tiles_x


def render(positions, rotations, log_scales, opacity_logits, sh_coeffs,
           camera: Camera, background, sh_view_positions=None,
           retain_aux: bool = False, tile_size: int = TILE_SIZE) -> RenderOutput:
    """Project, color, sort and composite a batch of Gaussians.

    ``sh_view_positions`` overrides the positions used for the SH view
    direction (camera center -> position); by default the rendered positions
    are used. Pass canonical positions here when rendering deformed sets.
    """
    background = np.asarray(background, dtype=float).reshape(3)
    cache, visible = project_batch(positions, rotations, log_scales,
                                   opacity_logits, camera)
    sh_pos = np.asarray(positions, dtype=float).reshape(-1, 3) \
        if sh_view_positions is None else np.asarray(sh_view_positions, dtype=float).reshape(-1, 3)
    vis_sh_pos = sh_pos[cache.visible]
    offsets = vis_sh_pos - camera.center
    dist = np.linalg.norm(offsets, axis=1, keepdims=True)
    dirs = offsets / np.maximum(dist, 1e-12)
    coeffs = np.asarray(sh_coeffs, dtype=float)[cache.visible]
    degree = int(round(np.sqrt(coeffs.shape[1]))) - 1 if coeffs.size else 0
    rgb, sh_cache = sh_evaluate_batch(coeffs, dirs, degree)

    image, t_final, last_contrib, tile_starts, tile_gauss, tiles_x = _composite(
        cache.mean2d, cache.conic, cache.alpha_base, rgb, cache.depth,
        cache.radius, camera, background, tile_size)

    aux = None
    if retain_aux:
        aux = {
            "projection": cache, "sh": sh_cache, "rgb": rgb,
            "sh_dist": dist, "sh_dirs": dirs,
            "tile_starts": tile_starts, "tile_gauss": tile_gauss,
            "tiles_x": tiles_x, "tile_size": tile_size,
            "last_contrib": last_contrib, "background": background,
            "camera": camera, "n_input": cache.n_input, "visible": visible,
        }
    return RenderOutput(image=image, transmittance=t_final, aux=aux)


def rasterize_forward(projected, camera: Camera, background,
                      tile_size: int = TILE_SIZE) -> RenderOutput:
    """Composite an already-projected sequence, sorted by ascending depth.

    This is the compositing stage alone; its output carries no 3D backward
    state. Use ``render`` for the differentiable path.
    """
    background = np.asarray(background, dtype=float).reshape(3)
    projected = list(projected)
    depths = np.array([p.depth for p in projected])
    if np.any(np.diff(depths) < 0):
        raise ValueError("rasterize_forward expects splats sorted by ascending depth")
    m = len(projected)
    mean2d = np.array([p.mean2d for p in projected]).reshape(m, 2)
    conic = np.empty((m, 3))
    for i, p in enumerate(projected):
        inv = np.linalg.inv(p.cov2d)
        conic[i] = (inv[0, 0], inv[0, 1], inv[1, 1])
    alpha_base = np.array([p.alpha_base for p in projected])
    rgb = np.array([p.rgb for p in projected]).reshape(m, 3)
    radius = np.array([p.radius for p in projected])
    image, t_final, *_ = _composite(mean2d, conic, alpha_base, rgb, depths,
                                    radius, camera, background, tile_size)
    return RenderOutput(image=image, transmittance=t_final, aux=None)
