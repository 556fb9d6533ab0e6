"""EWA projection of 3D Gaussians to screen-space ellipses, with backward.

The 2D covariance is J W Sigma W^T J^T where W is the rotation block of the
world-to-camera transform and J the affine Jacobian of perspective projection
at the view-space mean. A low-pass floor is added to the diagonal before
inversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import Camera
from ..core_math import (
    normalize_backward_batch,
    quat_normalize_batch,
    quat_to_rotmat_batch,
    rotmat_backward_batch,
)
from .constants import LOW_PASS, Z_NEAR


@dataclass
class ProjectedGaussian:
    """One screen-space splat (u_i, Sigma'_i, depth, color, opacity, extent)."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    rgb: np.ndarray
    alpha_base: float
    radius: float


class ProjectionCache:
    """Everything the projection backward needs, for the visible subset."""

    __slots__ = (
        "camera", "visible", "view_means", "unit_quats", "raw_quats", "R3",
        "exp2s", "J", "A", "cov3d", "cov2d", "conic", "alpha_base", "mean2d",
        "depth", "radius", "n_input",
    )


def project_batch(positions, rotations, log_scales, opacity_logits, camera: Camera):
    """Project a batch of Gaussians. Returns (cache, visible_mask).

    Rotations are normalized internally; the backward accounts for it.
    Culling: view-space depth <= Z_NEAR, or the 3-sigma screen bounding box
    missing the image rectangle.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(positions)
    W = camera.rotation
    view = positions @ W.T + camera.translation

    in_front = view[:, 2] > Z_NEAR
    idx = np.nonzero(in_front)[0]

    vx, vy, vz = view[idx, 0], view[idx, 1], view[idx, 2]
    inv_z = 1.0 / vz
    u = camera.fx * vx * inv_z + camera.cx
    v = camera.fy * vy * inv_z + camera.cy

    raw_q = np.asarray(rotations, dtype=float).reshape(n, 4)[idx]
    unit_q = quat_normalize_batch(raw_q)
    R3 = quat_to_rotmat_batch(unit_q)
    s = np.asarray(log_scales, dtype=float).reshape(n, 3)[idx]
    exp2s = np.exp(2.0 * s)
    cov3d = np.einsum("nij,nj,nkj->nik", R3, exp2s, R3)

    J = np.zeros((len(idx), 2, 3))
    J[:, 0, 0] = camera.fx * inv_z
    J[:, 0, 2] = -camera.fx * vx * inv_z * inv_z
    J[:, 1, 1] = camera.fy * inv_z
    J[:, 1, 2] = -camera.fy * vy * inv_z * inv_z
    A = J @ W  # (m, 2, 3)
    cov2d = np.einsum("nij,njk,nlk->nil", A, cov3d, A)
    cov2d[:, 0, 0] += LOW_PASS
    cov2d[:, 1, 1] += LOW_PASS

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    mid = 0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = 3.0 * np.sqrt(lam_max)

    on_screen = (
        (u + radius >= 0.0) & (u - radius <= camera.width - 1.0)
        & (v + radius >= 0.0) & (v - radius <= camera.height - 1.0)
    )
    keep = np.nonzero(on_screen)[0]
    visible = np.zeros(n, dtype=bool)
    visible[idx[keep]] = True

    cache = ProjectionCache()
    cache.camera = camera
    cache.n_input = n
    cache.visible = idx[keep]
    cache.view_means = view[idx[keep]]
    cache.raw_quats = raw_q[keep]
    cache.unit_quats = unit_q[keep]
    cache.R3 = R3[keep]
    cache.exp2s = exp2s[keep]
    cache.J = J[keep]
    cache.A = A[keep]
    cache.cov3d = cov3d[keep]
    cache.cov2d = cov2d[keep]
    inv_det = 1.0 / det[keep]
    m = cov2d[keep]
    cache.conic = np.stack(
        [m[:, 1, 1] * inv_det, -m[:, 0, 1] * inv_det, m[:, 0, 0] * inv_det], axis=1
    )
    cache.mean2d = np.stack([u[keep], v[keep]], axis=1)
    cache.depth = view[idx[keep], 2]
    cache.radius = radius[keep]
    logits = np.asarray(opacity_logits, dtype=float).reshape(n)[cache.visible]
    cache.alpha_base = 1.0 / (1.0 + np.exp(-logits))
    return cache, visible


def project(gaussian, camera: Camera, rgb=None):
    """Single-Gaussian projection. Returns ProjectedGaussian or None if culled."""
    cache, visible = project_batch(
        gaussian.position[None], gaussian.rotation[None],
        gaussian.log_scale[None], np.array([gaussian.opacity_logit]), camera,
    )
    if not visible[0]:
        return None
    return ProjectedGaussian(
        mean2d=cache.mean2d[0],
        cov2d=cache.cov2d[0],
        depth=float(cache.depth[0]),
        rgb=np.zeros(3) if rgb is None else np.asarray(rgb, dtype=float),
        alpha_base=float(cache.alpha_base[0]),
        radius=float(cache.radius[0]),
    )


def project_backward(cache: ProjectionCache, d_mean2d, d_conic, d_alpha_base):
    """Map screen-space gradients back to Gaussian parameters.

    Inputs are per-VISIBLE-gaussian arrays, aligned with cache rows. Returns
    dense (n_input, ...) arrays: d_position, d_rotation (through the internal
    normalization), d_log_scale, d_opacity_logit.
    """
    cam = cache.camera
    m = len(cache.visible)
    fx, fy = cam.fx, cam.fy
    W = cam.rotation

    # conic = inverse of cov2d. dL/dcov2d = -Q^T dL/dQ Q^T with Q symmetric.
    dQ = np.empty((m, 2, 2))
    dQ[:, 0, 0] = d_conic[:, 0]
    dQ[:, 0, 1] = 0.5 * d_conic[:, 1]
    dQ[:, 1, 0] = 0.5 * d_conic[:, 1]
    dQ[:, 1, 1] = d_conic[:, 2]
    Q = np.empty((m, 2, 2))
    Q[:, 0, 0] = cache.conic[:, 0]
    Q[:, 0, 1] = cache.conic[:, 1]
    Q[:, 1, 0] = cache.conic[:, 1]
    Q[:, 1, 1] = cache.conic[:, 2]
    d_cov2d = -np.einsum("nij,njk,nkl->nil", Q, dQ, Q)
    # symmetrize: cov2d is built symmetric, off-diagonal perturbations split
    d_cov2d = 0.5 * (d_cov2d + np.transpose(d_cov2d, (0, 2, 1)))

    # cov2d = A cov3d A^T (+ low-pass on the diagonal, identity gradient)
    dA = 2.0 * np.einsum("nij,njk,nkl->nil", d_cov2d, cache.A, cache.cov3d)
    d_cov3d = np.einsum("nji,njk,nkl->nil", cache.A, d_cov2d, cache.A)

    # A = J W
    dJ = np.einsum("nij,kj->nik", dA, W)

    # J entries depend on the view-space mean
    vx, vy, vz = cache.view_means[:, 0], cache.view_means[:, 1], cache.view_means[:, 2]
    inv_z = 1.0 / vz
    inv_z2 = inv_z * inv_z
    inv_z3 = inv_z2 * inv_z
    d_view = np.zeros((m, 3))
    d_view[:, 0] = dJ[:, 0, 2] * (-fx * inv_z2)
    d_view[:, 1] = dJ[:, 1, 2] * (-fy * inv_z2)
    d_view[:, 2] = (
        dJ[:, 0, 0] * (-fx * inv_z2)
        + dJ[:, 1, 1] * (-fy * inv_z2)
        + dJ[:, 0, 2] * (2.0 * fx * vx * inv_z3)
        + dJ[:, 1, 2] * (2.0 * fy * vy * inv_z3)
    )

    # mean2d = (fx vx/vz + cx, fy vy/vz + cy)
    d_view[:, 0] += d_mean2d[:, 0] * fx * inv_z
    d_view[:, 1] += d_mean2d[:, 1] * fy * inv_z
    d_view[:, 2] += (
        d_mean2d[:, 0] * (-fx * vx * inv_z2) + d_mean2d[:, 1] * (-fy * vy * inv_z2)
    )

    d_position_v = d_view @ W  # dL/dx_world = W^T dL/dx_view, batched

    # cov3d = R diag(exp(2s)) R^T
    dR3 = 2.0 * np.einsum("nij,njk,nk->nik", d_cov3d, cache.R3, cache.exp2s)
    dD = np.einsum("nji,njk,nki->ni", cache.R3, d_cov3d, cache.R3)  # diag terms
    d_log_scale_v = dD * 2.0 * cache.exp2s

    d_unit_q = rotmat_backward_batch(cache.unit_quats, dR3)
    d_rot_v = normalize_backward_batch(cache.raw_quats, d_unit_q)

    d_opacity_v = d_alpha_base * cache.alpha_base * (1.0 - cache.alpha_base)

    n = cache.n_input
    d_position = np.zeros((n, 3))
    d_rotation = np.zeros((n, 4))
    d_log_scale = np.zeros((n, 3))
    d_opacity = np.zeros(n)
    d_position[cache.visible] = d_position_v
    d_rotation[cache.visible] = d_rot_v
    d_log_scale[cache.visible] = d_log_scale_v
    d_opacity[cache.visible] = d_opacity_v
    return d_position, d_rotation, d_log_scale, d_opacity
