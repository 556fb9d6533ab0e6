"""Closed-form Gaussian / quaternion / encoding math used everywhere else.

Conventions:
  - Quaternions are numpy arrays ``(w, x, y, z)``; batches are ``(N, 4)``.
  - All functions are pure and dtype-preserving for float64 inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DegenerateQuaternion

# Real spherical-harmonics basis constants (degrees 0..3), splatting sign
# convention: band 1 is ordered (-y, +z, -x).
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def inverse_sigmoid(y):
    return np.log(y / (1.0 - y))


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Scale ``q`` to unit norm. Raises DegenerateQuaternion at zero norm."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise DegenerateQuaternion(f"cannot normalize quaternion with norm {n}")
    return q / n


def quat_normalize_batch(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise DegenerateQuaternion("zero-norm quaternion in batch")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b, batched over leading dimensions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (caller normalizes)."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_to_rotmat_batch(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotmat_backward_batch(q: np.ndarray, dR: np.ndarray) -> np.ndarray:
    """Gradient through quat_to_rotmat_batch: maps dL/dR (N,3,3) to dL/dq (N,4).

    ``q`` must be the exact (unit) quaternions the forward used; the caller
    composes with the normalization Jacobian when the raw parameter is
    unnormalized.
    """
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    g = np.empty_like(q)
    # dR/dw
    g[:, 0] = 2 * (
        -z * dR[:, 0, 1] + y * dR[:, 0, 2]
        + z * dR[:, 1, 0] - x * dR[:, 1, 2]
        - y * dR[:, 2, 0] + x * dR[:, 2, 1]
    )
    # dR/dx
    g[:, 1] = 2 * (
        y * dR[:, 0, 1] + z * dR[:, 0, 2]
        + y * dR[:, 1, 0] - 2 * x * dR[:, 1, 1] - w * dR[:, 1, 2]
        + z * dR[:, 2, 0] + w * dR[:, 2, 1] - 2 * x * dR[:, 2, 2]
    )
    # dR/dy
    g[:, 2] = 2 * (
        -2 * y * dR[:, 0, 0] + x * dR[:, 0, 1] + w * dR[:, 0, 2]
        + x * dR[:, 1, 0] + z * dR[:, 1, 2]
        - w * dR[:, 2, 0] + z * dR[:, 2, 1] - 2 * y * dR[:, 2, 2]
    )
    # dR/dz
    g[:, 3] = 2 * (
        -2 * z * dR[:, 0, 0] - w * dR[:, 0, 1] + x * dR[:, 0, 2]
        + w * dR[:, 1, 0] - 2 * z * dR[:, 1, 1] + y * dR[:, 1, 2]
        + x * dR[:, 2, 0] + y * dR[:, 2, 1]
    )
    return g


def normalize_backward_batch(raw: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    """Jacobian of v -> v/|v| applied to upstream gradients (batched rows)."""
    n = np.linalg.norm(raw, axis=-1, keepdims=True)
    unit = raw / n
    radial = np.sum(d_unit * unit, axis=-1, keepdims=True)
    return (d_unit - unit * radial) / n


def covariance_from(q: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    """3x3 covariance R diag(Exp(s))^2 R^T for a unit quaternion q."""
    R = quat_to_rotmat(q)
    e2 = np.exp(2.0 * np.asarray(log_scale, dtype=float))
    return (R * e2) @ R.T


def covariance_from_batch(q: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    R = quat_to_rotmat_batch(q)
    e2 = np.exp(2.0 * np.asarray(log_scale, dtype=float))
    return np.einsum("nij,nj,nkj->nik", R, e2, R)


def sh_basis(view_dir: np.ndarray, degree: int) -> np.ndarray:
    """Real-SH basis values for unit directions, shape (..., (degree+1)^2)."""
    if degree < 0 or degree > 3:
        raise ConfigError(f"SH degree must be in [0, 3], got {degree}")
    d = np.asarray(view_dir, dtype=float)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = [np.full(np.shape(x), SH_C0)]
    if degree >= 1:
        out += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out += [
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        out += [
            SH_C3[0] * y * (3 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4 * zz - xx - yy),
            SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
            SH_C3[4] * x * (4 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3 * yy),
        ]
    return np.stack(np.broadcast_arrays(*out), axis=-1)


def sh_basis_grad(view_dir: np.ndarray, degree: int) -> np.ndarray:
    """d(basis)/d(direction) for degrees 0..3, shape (..., K, 3)."""
    if degree < 0 or degree > 3:
        raise ConfigError(f"SH degree must be in [0, 3], got {degree}")
    d = np.asarray(view_dir, dtype=float)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    zero = np.zeros(np.shape(x))
    one = np.ones(np.shape(x))
    rows = [(zero, zero, zero)]
    if degree >= 1:
        rows += [
            (zero, -SH_C1 * one, zero),
            (zero, zero, SH_C1 * one),
            (-SH_C1 * one, zero, zero),
        ]
    if degree >= 2:
        rows += [
            (SH_C2[0] * y, SH_C2[0] * x, zero),
            (zero, SH_C2[1] * z, SH_C2[1] * y),
            (-2 * SH_C2[2] * x, -2 * SH_C2[2] * y, 4 * SH_C2[2] * z),
            (SH_C2[3] * z, zero, SH_C2[3] * x),
            (2 * SH_C2[4] * x, -2 * SH_C2[4] * y, zero),
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        rows += [
            (SH_C3[0] * 6 * x * y, SH_C3[0] * (3 * xx - 3 * yy), zero),
            (SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y),
            (-2 * SH_C3[2] * x * y, SH_C3[2] * (4 * zz - xx - 3 * yy), 8 * SH_C3[2] * y * z),
            (-6 * SH_C3[3] * x * z, -6 * SH_C3[3] * y * z, SH_C3[3] * (6 * zz - 3 * xx - 3 * yy)),
            (SH_C3[4] * (4 * zz - 3 * xx - yy), -2 * SH_C3[4] * x * y, 8 * SH_C3[4] * x * z),
            (2 * SH_C3[5] * x * z, -2 * SH_C3[5] * y * z, SH_C3[5] * (xx - yy)),
            (SH_C3[6] * (3 * xx - 3 * yy), -6 * SH_C3[6] * x * y, zero),
        ]
    stacked = [np.stack(np.broadcast_arrays(*r), axis=-1) for r in rows]
    return np.stack(stacked, axis=-2)


def sh_evaluate(coeffs: np.ndarray, view_dir: np.ndarray, degree: int) -> np.ndarray:
    """View-dependent RGB from SH coefficients.

    ``coeffs`` has shape ((degree+1)^2, 3). The result is the basis dot
    product plus the 0.5 DC offset, clamped at 0 from below.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    k = (degree + 1) ** 2
    if coeffs.shape != (k, 3):
        raise ConfigError(f"expected {k} SH coefficient triples, got shape {coeffs.shape}")
    basis = sh_basis(view_dir, degree)
    return np.maximum(basis @ coeffs + 0.5, 0.0)


def sh_evaluate_batch(coeffs: np.ndarray, view_dirs: np.ndarray, degree: int):
    """Batched SH color. Returns (rgb (N,3), cache for sh_backward_batch)."""
    basis = sh_basis(view_dirs, degree)  # (N, K)
    raw = np.einsum("nk,nkc->nc", basis, coeffs) + 0.5
    rgb = np.maximum(raw, 0.0)
    cache = {"basis": basis, "mask": raw > 0.0, "dirs": np.asarray(view_dirs, dtype=float),
             "coeffs": np.asarray(coeffs, dtype=float), "degree": degree}
    return rgb, cache


def sh_backward_batch(cache: dict, d_rgb: np.ndarray):
    """Gradients of SH colors: returns (dL/dcoeffs (N,K,3), dL/ddir (N,3))."""
    d_raw = d_rgb * cache["mask"]
    d_coeffs = cache["basis"][:, :, None] * d_raw[:, None, :]
    bgrad = sh_basis_grad(cache["dirs"], cache["degree"])  # (N, K, 3)
    # dL/ddir_a = sum_k sum_c d_raw[c] * coeffs[k,c] * dbasis[k]/ddir_a
    w = np.einsum("nkc,nc->nk", cache["coeffs"], d_raw)
    d_dir = np.einsum("nk,nka->na", w, bgrad)
    return d_coeffs, d_dir


def positional_encoding(v: np.ndarray, L: int) -> np.ndarray:
    """Band-major sin/cos encoding: (sin(2^0 v), cos(2^0 v), ..., cos(2^(L-1) v)).

    A d-vector maps to a 2*L*d vector; L=0 yields an empty vector. The raw
    input is not included.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if L == 0:
        return np.zeros(v.shape[:-1] + (0,))
    freqs = 2.0 ** np.arange(L)
    scaled = v[..., None, :] * freqs[:, None]  # (..., L, d)
    enc = np.stack([np.sin(scaled), np.cos(scaled)], axis=-2)  # (..., L, 2, d)
    return enc.reshape(v.shape[:-1] + (2 * L * v.shape[-1],))
