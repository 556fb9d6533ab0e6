"""Numba kernels for tile-based front-to-back compositing.

Tiles are processed in parallel; pixels within a tile are independent in the
forward pass. The backward pass accumulates per-(tile, splat) gradients into
a pair-indexed buffer and reduces it serially in tile order, so results are
bit-identical across thread counts.
"""

from __future__ import annotations

import os

import numba
import numpy as np
from numba import njit, prange

from .constants import ALPHA_CLAMP, ALPHA_SKIP, POWER_CUTOFF, T_TERMINATE

_threads_configured = False


def configure_threads():
    """Apply the GAUFRE_THREADS cap once, before the first kernel launch."""
    global _threads_configured
    if _threads_configured:
        return
    _threads_configured = True
    env = os.environ.get("GAUFRE_THREADS")
    if env:
        try:
            requested = max(1, int(env))
        except ValueError:
            return
        numba.set_num_threads(min(requested, numba.config.NUMBA_NUM_THREADS))


@njit(parallel=True, cache=True)
def forward_kernel(tile_starts, tile_gauss, mean2d, conic, alpha_base, rgb,
                   background, width, height, tile_size, tiles_x,
                   image, t_final, last_contrib):
    n_tiles = tile_starts.shape[0] - 1
    for tile in prange(n_tiles):
        ty = tile // tiles_x
        tx = tile - ty * tiles_x
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        lo = tile_starts[tile]
        hi = tile_starts[tile + 1]
        for py in range(y0, y1):
            for px in range(x0, x1):
                T = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                last = lo - 1
                for k in range(lo, hi):
                    gi = tile_gauss[k]
                    dx = px - mean2d[gi, 0]
                    dy = py - mean2d[gi, 1]
                    power = 0.5 * (conic[gi, 0] * dx * dx + conic[gi, 2] * dy * dy) \
                        + conic[gi, 1] * dx * dy
                    if power > POWER_CUTOFF or power < 0.0:
                        continue
                    alpha = alpha_base[gi] * np.exp(-power)
                    if alpha > ALPHA_CLAMP:
                        alpha = ALPHA_CLAMP
                    if alpha < ALPHA_SKIP:
                        continue
                    t_next = T * (1.0 - alpha)
                    if t_next < T_TERMINATE:
                        break
                    w = alpha * T
                    r += w * rgb[gi, 0]
                    g += w * rgb[gi, 1]
                    b += w * rgb[gi, 2]
                    T = t_next
                    last = k
                image[py, px, 0] = r + T * background[0]
                image[py, px, 1] = g + T * background[1]
                image[py, px, 2] = b + T * background[2]
                t_final[py, px] = T
                last_contrib[py, px] = last


@njit(parallel=True, cache=True)
def backward_kernel(tile_starts, tile_gauss, mean2d, conic, alpha_base, rgb,
                    background, width, height, tile_size, tiles_x,
                    t_final, last_contrib, d_image, pair_grads):
    # pair_grads rows: d_mean2d(2), d_conic(3), d_alpha_base(1), d_rgb(3)
    n_tiles = tile_starts.shape[0] - 1
    for tile in prange(n_tiles):
        ty = tile // tiles_x
        tx = tile - ty * tiles_x
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        lo = tile_starts[tile]
        for py in range(y0, y1):
            for px in range(x0, x1):
                last = last_contrib[py, px]
                if last < lo:
                    continue
                dL0 = d_image[py, px, 0]
                dL1 = d_image[py, px, 1]
                dL2 = d_image[py, px, 2]
                T = t_final[py, px]
                # suffix color sum (background term included)
                s0 = background[0] * T
                s1 = background[1] * T
                s2 = background[2] * T
                for k in range(last, lo - 1, -1):
                    gi = tile_gauss[k]
                    dx = px - mean2d[gi, 0]
                    dy = py - mean2d[gi, 1]
                    power = 0.5 * (conic[gi, 0] * dx * dx + conic[gi, 2] * dy * dy) \
                        + conic[gi, 1] * dx * dy
                    if power > POWER_CUTOFF or power < 0.0:
                        continue
                    raw_alpha = alpha_base[gi] * np.exp(-power)
                    alpha = raw_alpha
                    clamped = False
                    if alpha > ALPHA_CLAMP:
                        alpha = ALPHA_CLAMP
                        clamped = True
                    if alpha < ALPHA_SKIP:
                        continue
                    one_minus = 1.0 - alpha
                    T_before = T / one_minus
                    w = alpha * T_before
                    # color gradient
                    pair_grads[k, 6] += dL0 * w
                    pair_grads[k, 7] += dL1 * w
                    pair_grads[k, 8] += dL2 * w
                    # alpha gradient
                    d_alpha = (
                        dL0 * (rgb[gi, 0] * T_before - s0 / one_minus)
                        + dL1 * (rgb[gi, 1] * T_before - s1 / one_minus)
                        + dL2 * (rgb[gi, 2] * T_before - s2 / one_minus)
                    )
                    s0 += rgb[gi, 0] * w
                    s1 += rgb[gi, 1] * w
                    s2 += rgb[gi, 2] * w
                    T = T_before
                    if not clamped:
                        pair_grads[k, 5] += d_alpha * np.exp(-power)
                        d_power = -raw_alpha * d_alpha
                        pair_grads[k, 0] += -d_power * (conic[gi, 0] * dx + conic[gi, 1] * dy)
                        pair_grads[k, 1] += -d_power * (conic[gi, 1] * dx + conic[gi, 2] * dy)
                        pair_grads[k, 2] += d_power * 0.5 * dx * dx
                        pair_grads[k, 3] += d_power * dx * dy
                        pair_grads[k, 4] += d_power * 0.5 * dy * dy


def reduce_pair_grads(pair_grads, tile_gauss, n_visible):
    """Deterministic reduction of pair gradients to per-splat gradients."""
    out = np.zeros((n_visible, 9))
    np.add.at(out, tile_gauss, pair_grads)
    return out
