"""Forward-warping deformation field and the warp algebra that applies it.

The field is a fixed-topology ReLU MLP over concatenated positional and
temporal encodings, with a skip connection re-injecting the encoding at the
fourth hidden layer and zero-initialized linear heads so the warp starts as
an exact identity. Forward, backward and the attribute-update rules are
hand-derived; no autograd framework is involved.

Warp rules for a Gaussian at time t (default modes):
    position_t  = position + delta_position
    log_scale_t = log_scale + delta_log_scale          (pre-exponentiation)
    rotation_t  = normalize(rotation * normalize(identity + delta_quat_raw))
    opacity, SH = copied unchanged

Ablation variants swap individual rules; see ``ScaleMode``/``RotationMode``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core_math import (
    QUAT_IDENTITY,
    positional_encoding,
    quat_multiply,
)
from .errors import ConfigError, DegenerateQuaternion, StateError
from .gaussians import GaussianSet

SCALE_FLOOR = 1e-8  # post-exponentiation mode clamps Exp(s)+ds here


class ScaleMode(str, Enum):
    PRE_EXP = "pre_exp"
    FIX = "fix"
    POST_EXP = "post_exp"


class RotationMode(str, Enum):
    MULTIPLY = "multiply"
    ADD = "add"


@dataclass
class DeformConfig:
    scale_mode: ScaleMode = ScaleMode.PRE_EXP
    rotation_mode: RotationMode = RotationMode.MULTIPLY
    deform_opacity: bool = False
    deform_sh: bool = False

    @classmethod
    def from_flags(cls, fix_scale=False, scale_post_exp=False,
                   quaternion_addition=False, deform_opacity=False,
                   deform_sh=False) -> "DeformConfig":
        if fix_scale and scale_post_exp:
            raise ConfigError("fix_scale and scale_post_exp are mutually exclusive")
        scale_mode = ScaleMode.PRE_EXP
        if fix_scale:
            scale_mode = ScaleMode.FIX
        elif scale_post_exp:
            scale_mode = ScaleMode.POST_EXP
        rotation_mode = RotationMode.ADD if quaternion_addition else RotationMode.MULTIPLY
        return cls(scale_mode, rotation_mode, deform_opacity, deform_sh)


@dataclass
class DeformOutput:
    """Per-Gaussian attribute deltas (batched: leading dimension N)."""

    delta_position: np.ndarray
    delta_quat_raw: np.ndarray
    delta_log_scale: np.ndarray
    delta_opacity: np.ndarray | None = None
    delta_sh: np.ndarray | None = None


class DeformationField:
    """Fixed-topology MLP: (PE(position), PE(t)) -> (dx, dq_raw, ds[, ...]).

    depth hidden layers of the given width, ReLU activations, skip
    concatenation of the input encoding at hidden layer ``skip_at``
    (1-indexed), linear heads. Head weights and biases start at zero, so a
    fresh field is exactly the identity deformation.
    """

    HEAD_DIMS = {"dx": 3, "dq": 4, "ds": 3}

    def __init__(self, l_x: int = 10, l_t: int = 10, depth: int = 6,
                 width: int = 256, skip_at: int = 4, sh_coeff_count: int = 4,
                 deform_opacity: bool = False, deform_sh: bool = False,
                 rng: np.random.Generator | None = None):
        if depth < 1:
            raise ConfigError("depth must be >= 1")
        if not (1 <= skip_at <= depth) and depth > 1:
            raise ConfigError(f"skip_at must be in [1, {depth}]")
        self.l_x = int(l_x)
        self.l_t = int(l_t)
        self.depth = int(depth)
        self.width = int(width)
        self.skip_at = int(skip_at)
        self.in_dim = 2 * self.l_x * 3 + 2 * self.l_t
        rng = rng or np.random.default_rng(0)

        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        for i in range(depth):
            fan_in = self.in_dim if i == 0 else width
            if i == self.skip_at - 1 and i > 0:
                fan_in += self.in_dim
            bound = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(width, fan_in))
            b = rng.uniform(-bound, bound, size=width)
            self.layers.append((W, b))

        self.head_dims = dict(self.HEAD_DIMS)
        if deform_opacity:
            self.head_dims["do"] = 1
        if deform_sh:
            self.head_dims["dsh"] = 3 * sh_coeff_count
        self.heads = {
            name: (np.zeros((dim, width)), np.zeros(dim))
            for name, dim in self.head_dims.items()
        }

    # --- parameter plumbing -------------------------------------------------

    def named_params(self):
        for i, (W, b) in enumerate(self.layers):
            yield f"layer{i}.W", W
            yield f"layer{i}.b", b
        for name in sorted(self.heads):
            W, b = self.heads[name]
            yield f"head.{name}.W", W
            yield f"head.{name}.b", b

    def set_param(self, name: str, value: np.ndarray):
        if name.startswith("layer"):
            idx, kind = name[5:].split(".")
            W, b = self.layers[int(idx)]
            self.layers[int(idx)] = (value, b) if kind == "W" else (W, value)
        elif name.startswith("head."):
            _, head, kind = name.split(".")
            W, b = self.heads[head]
            self.heads[head] = (value, b) if kind == "W" else (W, value)
        else:
            raise KeyError(name)

    def n_params(self) -> int:
        return sum(p.size for _, p in self.named_params())

    # --- forward / backward -------------------------------------------------

    def encode(self, positions: np.ndarray, t: float) -> np.ndarray:
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        enc_x = positional_encoding(positions, self.l_x)
        enc_t = positional_encoding(np.array([t]), self.l_t)
        enc_t = np.broadcast_to(enc_t, (len(positions), enc_t.shape[-1]))
        return np.concatenate([enc_x, enc_t], axis=1)

    def forward(self, positions: np.ndarray, t: float, want_cache: bool = False):
        """Evaluate the field for a batch of positions at one timestamp.

        Returns (DeformOutput, cache). The position input is treated as
        detached: backward produces no gradient with respect to it.
        """
        X = self.encode(positions, t)
        h = X
        pre_acts = []
        inputs = []
        for i, (W, b) in enumerate(self.layers):
            if i == self.skip_at - 1 and i > 0:
                h = np.concatenate([h, X], axis=1)
            inputs.append(h if want_cache else None)
            z = h @ W.T + b
            pre_acts.append(z if want_cache else None)
            h = np.maximum(z, 0.0)
        head_out = {}
        for name in self.head_dims:
            W, b = self.heads[name]
            head_out[name] = h @ W.T + b
        out = DeformOutput(
            delta_position=head_out["dx"],
            delta_quat_raw=head_out["dq"],
            delta_log_scale=head_out["ds"],
            delta_opacity=head_out.get("do"),
            delta_sh=head_out.get("dsh"),
        )
        cache = {"X": X, "inputs": inputs, "pre_acts": pre_acts, "h_last": h} \
            if want_cache else None
        return out, cache

    def backward(self, cache: dict, d_out: dict, want_input_grad: bool = False):
        """Reverse-mode gradients for all weights and biases.

        ``d_out`` maps head names to (N, head_dim) upstream gradients; heads
        that are absent are treated as zero. Returns {param_name: grad}, or
        (grads, dL/dposition (N,3)) when ``want_input_grad``. By default the
        position input is detached: no gradient flows to it.
        """
        if cache is None:
            raise StateError("field backward requires the forward cache")
        h_last = cache["h_last"]
        grads = {}
        d_h = np.zeros_like(h_last)
        for name in self.head_dims:
            W, _ = self.heads[name]
            g = d_out.get(name)
            if g is None:
                grads[f"head.{name}.W"] = np.zeros_like(W)
                grads[f"head.{name}.b"] = np.zeros(W.shape[0])
                continue
            grads[f"head.{name}.W"] = g.T @ h_last
            grads[f"head.{name}.b"] = g.sum(axis=0)
            d_h = d_h + g @ W
        d_X = None
        for i in range(self.depth - 1, -1, -1):
            W, _ = self.layers[i]
            d_z = d_h * (cache["pre_acts"][i] > 0.0)
            grads[f"layer{i}.W"] = d_z.T @ cache["inputs"][i]
            grads[f"layer{i}.b"] = d_z.sum(axis=0)
            d_h = d_z @ W
            if i == self.skip_at - 1 and i > 0:
                if want_input_grad:
                    skip_part = d_h[:, self.width:]
                    d_X = skip_part if d_X is None else d_X + skip_part
                d_h = d_h[:, : self.width]  # drop the skip-encoding slice
        if not want_input_grad:
            return grads
        d_X = d_h if d_X is None else d_X + d_h
        return grads, self._encoding_position_grad(cache["X"], d_X)

    def _encoding_position_grad(self, X: np.ndarray, d_X: np.ndarray) -> np.ndarray:
        """Chain dL/d(encoding) through the sin/cos bands to dL/dposition."""
        d_pos = np.zeros((len(X), 3))
        if self.l_x == 0:
            return d_pos
        n = len(X)
        # position block layout: (L, {sin, cos}, 3) flattened
        block = d_X[:, : 2 * self.l_x * 3].reshape(n, self.l_x, 2, 3)
        enc = X[:, : 2 * self.l_x * 3].reshape(n, self.l_x, 2, 3)
        freqs = (2.0 ** np.arange(self.l_x))[None, :, None]
        # d sin(f x)/dx = f cos(f x); d cos(f x)/dx = -f sin(f x)
        d_pos += np.sum(block[:, :, 0, :] * freqs * enc[:, :, 1, :], axis=1)
        d_pos -= np.sum(block[:, :, 1, :] * freqs * enc[:, :, 0, :], axis=1)
        return d_pos


# --- warp algebra -----------------------------------------------------------


def apply_deformation_batch(gset: GaussianSet, d: DeformOutput,
                            config: DeformConfig | None = None,
                            want_cache: bool = False):
    """Warp a Gaussian set by per-Gaussian deltas. Returns (GaussianSet, cache).

    Exactness guarantee: when every raw rotation delta is zero the input
    rotation array is passed through bit-identically, so a zero-initialized
    field reproduces the canonical render exactly.
    """
    config = config or DeformConfig()
    n = len(gset)
    positions_t = gset.positions + d.delta_position

    cache = {"config": config, "n": n} if want_cache else None

    if config.scale_mode is ScaleMode.FIX:
        log_scales_t = gset.log_scales.copy()
    elif config.scale_mode is ScaleMode.PRE_EXP:
        log_scales_t = gset.log_scales + d.delta_log_scale
    else:  # POST_EXP: Exp(s_t) = Exp(s) + ds, floored
        exp_s = np.exp(gset.log_scales)
        summed = exp_s + d.delta_log_scale
        floored = np.maximum(summed, SCALE_FLOOR)
        log_scales_t = np.log(floored)
        if want_cache:
            cache["post_exp_s"] = exp_s
            cache["post_floored"] = floored
            cache["post_clamped"] = summed < SCALE_FLOOR

    if config.rotation_mode is RotationMode.MULTIPLY:
        if not np.any(d.delta_quat_raw):
            rotations_t = gset.rotations
            if want_cache:
                cache["rot_identity_fastpath"] = True
                cache["dq_unit"] = np.broadcast_to(QUAT_IDENTITY, (n, 4))
                cache["dq_norm"] = np.ones((n, 1))
                cache["q_prod"] = gset.rotations
        else:
            dq_raw = QUAT_IDENTITY + d.delta_quat_raw
            dq_norm = np.linalg.norm(dq_raw, axis=1, keepdims=True)
            if np.any(dq_norm < 1e-12):
                raise DegenerateQuaternion("identity + delta quaternion has zero norm")
            dq_unit = dq_raw / dq_norm
            q_prod = quat_multiply(gset.rotations, dq_unit)
            prod_norm = np.linalg.norm(q_prod, axis=1, keepdims=True)
            if np.any(prod_norm < 1e-12):
                raise DegenerateQuaternion("deformed quaternion has zero norm")
            rotations_t = q_prod / prod_norm
            if want_cache:
                cache["rot_identity_fastpath"] = False
                cache["dq_unit"] = dq_unit
                cache["dq_norm"] = dq_norm
                cache["q_prod"] = q_prod
    else:  # ADD
        q_sum = gset.rotations + d.delta_quat_raw
        sum_norm = np.linalg.norm(q_sum, axis=1, keepdims=True)
        if np.any(sum_norm < 1e-12):
            raise DegenerateQuaternion("rotation + delta quaternion has zero norm")
        rotations_t = q_sum / sum_norm
        if want_cache:
            cache["q_sum"] = q_sum

    if config.deform_opacity and d.delta_opacity is not None:
        opacity_t = gset.opacity_logits + d.delta_opacity[:, 0]
    else:
        opacity_t = gset.opacity_logits.copy()

    if config.deform_sh and d.delta_sh is not None:
        sh_t = gset.sh_coeffs + d.delta_sh.reshape(gset.sh_coeffs.shape)
    else:
        sh_t = gset.sh_coeffs.copy()

    warped = GaussianSet(positions_t, rotations_t, log_scales_t, opacity_t, sh_t)
    if want_cache:
        cache["canonical_rotations"] = gset.rotations
        cache["rotations_t"] = warped.rotations
    return warped, cache


def _quat_mul_backward(a, b, d_prod):
    """Gradients of the Hamilton product c = a*b given dL/dc (batched)."""
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    gw, gx, gy, gz = d_prod[:, 0], d_prod[:, 1], d_prod[:, 2], d_prod[:, 3]
    d_a = np.stack([
        gw * bw + gx * bx + gy * by + gz * bz,
        -gw * bx + gx * bw - gy * bz + gz * by,
        -gw * by + gx * bz + gy * bw - gz * bx,
        -gw * bz - gx * by + gy * bx + gz * bw,
    ], axis=1)
    d_b = np.stack([
        gw * aw + gx * ax + gy * ay + gz * az,
        -gw * ax + gx * aw + gy * az - gz * ay,
        -gw * ay - gx * az + gy * aw + gz * ax,
        -gw * az + gx * ay - gy * ax + gz * aw,
    ], axis=1)
    return d_a, d_b


def _normalize_backward(raw, norm, d_unit):
    unit = raw / norm
    radial = np.sum(d_unit * unit, axis=1, keepdims=True)
    return (d_unit - unit * radial) / norm


def apply_deformation_backward(gset: GaussianSet, d: DeformOutput, cache: dict,
                               grads_t) -> tuple[dict, dict]:
    """Exact chain rule through the warp.

    ``grads_t`` holds gradients w.r.t. the deformed attributes (positions,
    rotations, log_scales, opacity_logits, sh_coeffs as arrays). Returns
    (grads w.r.t. canonical attributes, grads w.r.t. deltas).
    """
    if cache is None:
        raise StateError("apply_deformation_backward requires the forward cache")
    config: DeformConfig = cache["config"]

    d_position = grads_t["positions"].copy()
    d_delta_position = grads_t["positions"].copy()

    if config.scale_mode is ScaleMode.FIX:
        d_log_scale = grads_t["log_scales"].copy()
        d_delta_scale = np.zeros_like(grads_t["log_scales"])
    elif config.scale_mode is ScaleMode.PRE_EXP:
        d_log_scale = grads_t["log_scales"].copy()
        d_delta_scale = grads_t["log_scales"].copy()
    else:
        # s_t = log(max(Exp(s) + ds, floor))
        pass_through = (~cache["post_clamped"]) / cache["post_floored"]
        d_delta_scale = grads_t["log_scales"] * pass_through
        d_log_scale = d_delta_scale * cache["post_exp_s"]

    d_rot_t = grads_t["rotations"]
    if config.rotation_mode is RotationMode.MULTIPLY:
        prod_norm = np.linalg.norm(cache["q_prod"], axis=1, keepdims=True)
        d_prod = _normalize_backward(cache["q_prod"], prod_norm, d_rot_t)
        d_rotation, d_dq_unit = _quat_mul_backward(
            cache["canonical_rotations"], cache["dq_unit"], d_prod)
        d_dq_raw = _normalize_backward(
            cache["dq_unit"] * cache["dq_norm"], cache["dq_norm"], d_dq_unit)
    else:
        q_sum = cache["q_sum"]
        sum_norm = np.linalg.norm(q_sum, axis=1, keepdims=True)
        d_sum = _normalize_backward(q_sum, sum_norm, d_rot_t)
        d_rotation = d_sum.copy()
        d_dq_raw = d_sum.copy()

    canonical = {
        "positions": d_position,
        "rotations": d_rotation,
        "log_scales": d_log_scale,
        "opacity_logits": grads_t["opacity_logits"].copy(),
        "sh_coeffs": grads_t["sh_coeffs"].copy(),
    }
    deltas = {
        "dx": d_delta_position,
        "dq": d_dq_raw,
        "ds": d_delta_scale,
    }
    if config.deform_opacity:
        deltas["do"] = grads_t["opacity_logits"][:, None].copy()
    if config.deform_sh:
        deltas["dsh"] = grads_t["sh_coeffs"].reshape(cache["n"], -1).copy()
    return canonical, deltas


def apply_deformation(gaussian, d_single: DeformOutput,
                      config: DeformConfig | None = None):
    """Single-Gaussian warp; delta fields may be flat vectors."""
    gset = GaussianSet.from_gaussians([gaussian])
    batched = DeformOutput(
        delta_position=np.asarray(d_single.delta_position, dtype=float).reshape(1, 3),
        delta_quat_raw=np.asarray(d_single.delta_quat_raw, dtype=float).reshape(1, 4),
        delta_log_scale=np.asarray(d_single.delta_log_scale, dtype=float).reshape(1, 3),
        delta_opacity=None if d_single.delta_opacity is None
        else np.asarray(d_single.delta_opacity, dtype=float).reshape(1, 1),
        delta_sh=None if d_single.delta_sh is None
        else np.asarray(d_single.delta_sh, dtype=float).reshape(1, -1),
    )
    out, _ = apply_deformation_batch(gset, batched, config)
    return out[0]


def deform_set(gset: GaussianSet, field: DeformationField, t: float,
               config: DeformConfig | None = None) -> GaussianSet:
    """Elementwise field evaluation + warp; order preserved."""
    if len(gset) == 0:
        return gset.copy()
    out, _ = field.forward(gset.positions, t)
    warped, _ = apply_deformation_batch(gset, out, config)
    return warped
