"""Analytic backward pass of the tile renderer.

Maps an image-space gradient to gradients of every visible Gaussian's
position, rotation, log-scale, opacity logit and SH coefficients, plus the
screen-space positional gradient magnitude the densification controller
consumes (pixel gradients scaled to half-image NDC units).
"""

from __future__ import annotations

import numpy as np

from ..core_math import sh_backward_batch
from ..errors import StateError
from ..gaussians import GaussianGrads
from .forward import RenderOutput
from .kernels import backward_kernel, reduce_pair_grads
from .projection import project_backward


def rasterize_backward(out: RenderOutput, d_image: np.ndarray) -> GaussianGrads:
    """Backward through compositing, SH color and projection.

    ``out`` must come from ``render(..., retain_aux=True)``. The returned
    gradients are dense over the input Gaussians (zero rows for culled ones)
    with the SH view-direction term folded into ``positions``. Pipelines that
    route that term elsewhere (deformed sets use canonical view positions)
    call ``render_backward`` with ``split_sh_position=True`` instead.
    """
    grads, _ = render_backward(out, d_image, split_sh_position=False)
    return grads


def render_backward(out: RenderOutput, d_image: np.ndarray,
                    split_sh_position: bool = False):
    """Full backward. Returns (GaussianGrads, d_sh_view_positions or None).

    With ``split_sh_position=True`` the SH view-direction contribution is NOT
    folded into ``grads.positions`` but returned as a separate dense array —
    the training loop routes it to canonical positions while the geometric
    position gradient flows through the deformation warp.
    """
    if out.aux is None:
        raise StateError("rasterize_backward requires a RenderOutput with retained aux")
    aux = out.aux
    cache = aux["projection"]
    cam = aux["camera"]
    d_image = np.asarray(d_image, dtype=float)
    if d_image.shape != out.image.shape:
        raise StateError(f"d_image shape {d_image.shape} != image shape {out.image.shape}")

    m = len(cache.visible)
    pair_grads = np.zeros((len(aux["tile_gauss"]), 9))
    backward_kernel(
        aux["tile_starts"], aux["tile_gauss"],
        np.ascontiguousarray(cache.mean2d), np.ascontiguousarray(cache.conic),
        np.ascontiguousarray(cache.alpha_base), np.ascontiguousarray(aux["rgb"]),
        aux["background"], cam.width, cam.height, aux["tile_size"], aux["tiles_x"],
        out.transmittance, aux["last_contrib"], np.ascontiguousarray(d_image),
        pair_grads,
    )
    per_splat = reduce_pair_grads(pair_grads, aux["tile_gauss"], m)
    d_mean2d = per_splat[:, 0:2]
    d_conic = per_splat[:, 2:5]
    d_alpha_base = per_splat[:, 5]
    d_rgb = per_splat[:, 6:9]

    d_position, d_rotation, d_log_scale, d_opacity = project_backward(
        cache, d_mean2d, d_conic, d_alpha_base)

    # SH color path: coefficients, and view direction -> view position
    d_coeffs_v, d_dir = sh_backward_batch(aux["sh"], d_rgb)
    dirs = aux["sh_dirs"]
    radial = np.sum(d_dir * dirs, axis=1, keepdims=True)
    d_view_pos_v = (d_dir - dirs * radial) / aux["sh_dist"]

    n = cache.n_input
    k = d_coeffs_v.shape[1] if d_coeffs_v.size else aux["sh"]["coeffs"].shape[1]
    d_sh = np.zeros((n, k, 3))
    d_sh[cache.visible] = d_coeffs_v
    d_sh_view = np.zeros((n, 3))
    d_sh_view[cache.visible] = d_view_pos_v
    if not split_sh_position:
        d_position = d_position + d_sh_view
        d_sh_view_out = None
    else:
        d_sh_view_out = d_sh_view

    # densification stat: pixel-space mean gradient in half-image NDC units
    ndc = d_mean2d * np.array([cam.width * 0.5, cam.height * 0.5])
    screen_norm = np.zeros(n)
    screen_norm[cache.visible] = np.linalg.norm(ndc, axis=1)

    grads = GaussianGrads(
        positions=d_position, rotations=d_rotation, log_scales=d_log_scale,
        opacity_logits=d_opacity, sh_coeffs=d_sh,
        screen_grad_norm=screen_norm, visible=aux["visible"].copy(),
    )
    return grads, d_sh_view_out


def background_gradient(out: RenderOutput, d_image: np.ndarray) -> np.ndarray:
    """Closed form: dL/dbackground_c = sum_pixels T_final * dL/dI_c."""
    return np.einsum("hw,hwc->c", out.transmittance, np.asarray(d_image, dtype=float))
