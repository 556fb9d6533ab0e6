"""Scene assembly, objective, optimization loop, metrics and ablations.

A Scene combines a deformable Gaussian set (optimized in canonical space,
warped per frame), a static set (rendered as-is), and the deformation field.
Rendering at time t composites deform(deformable, t) ++ static in one pass.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np
from scipy.spatial import cKDTree

from .camera import Camera
from .core_math import SH_C0, inverse_sigmoid
from .deformation import (
    DeformConfig,
    DeformationField,
    apply_deformation_backward,
    apply_deformation_batch,
    deform_set,
)
from .errors import ConfigError, EmptySplitError, NonFiniteGradient, ShapeError
from .gaussians import GaussianSet
from .metrics import ms_ssim, psnr, ssim
from .optimizer import (
    AdamState,
    DensifyStats,
    DensifyThresholds,
    SetAdam,
    accumulate_stats,
    adam_step,
    densify_and_prune,
    lr_factor,
)
from .rasterizer import render, render_backward


@dataclass
class TrainConfig:
    iterations: int = 40000
    densify_until: int = 20000
    densify_start: int = 500
    densify_interval: int = 100
    loss_switch_iter: int = 20000
    lr_decay_iters: int = 30000
    lr_final_factor: float = 0.001
    field_lr: float = 0.001
    position_lr: float = 1.6e-4  # scaled by scene extent, decayed
    rotation_lr: float = 1e-3
    scale_lr: float = 5e-3
    opacity_lr: float = 0.05
    sh_lr: float = 2.5e-3
    lambda_ssim: float = 0.2
    l_x: int = 10
    l_t: int = 10
    mlp_depth: int = 6
    mlp_width: int = 256
    mlp_skip_at: int = 4
    sh_degree: int = 1
    n_deformable: int = 2000
    densify_grad_threshold: float = 2e-4
    split_scale_fraction: float = 0.01
    prune_opacity: float = 0.005
    opacity_reset_interval: int = 0  # 0 = never
    warmup_iters: int = 0            # canonical-only iterations before warping
    detach_field_position: bool = True
    # ablation flags
    fix_scale: bool = False
    deform_opacity: bool = False
    deform_sh: bool = False
    quaternion_addition: bool = False
    scale_post_exp: bool = False
    no_static: bool = False
    no_ib_init: bool = False
    no_lr_transit: bool = False
    seed: int = 0
    background: tuple = (1.0, 1.0, 1.0)
    image_scale: float = 1.0
    checkpoint_interval: int = 5000
    dtype: str = "float64"  # "float32" runs the deformation MLP in 32-bit

    def __post_init__(self):
        if self.loss_switch_iter > self.iterations:
            raise ConfigError("loss_switch_iter must be <= iterations")
        if self.fix_scale and self.scale_post_exp:
            raise ConfigError("fix_scale and scale_post_exp are mutually exclusive")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        if self.n_deformable <= 0:
            raise ConfigError("n_deformable must be positive")

    def deform_config(self) -> DeformConfig:
        return DeformConfig.from_flags(
            fix_scale=self.fix_scale, scale_post_exp=self.scale_post_exp,
            quaternion_addition=self.quaternion_addition,
            deform_opacity=self.deform_opacity, deform_sh=self.deform_sh)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["background"] = list(self.background)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "background" in d:
            d["background"] = tuple(d["background"])
        return cls(**d)


@dataclass
class Scene:
    deformable: GaussianSet
    static: GaussianSet
    field: DeformationField
    scene_extent: float
    deform_config: DeformConfig = field(default_factory=DeformConfig)

    def gaussians_at(self, t: float) -> tuple[GaussianSet, np.ndarray]:
        """Concatenated set at time t, plus the SH view positions
        (canonical for deformable Gaussians, world for static ones)."""
        warped = deform_set(self.deformable, self.field, t, self.deform_config)
        combined = GaussianSet.concat(warped, self.static)
        sh_view = np.concatenate([self.deformable.positions, self.static.positions]) \
            if len(self.static) else self.deformable.positions.copy()
        return combined, sh_view


@dataclass
class Metrics:
    psnr: float
    ssim: float
    ms_ssim: float
    per_frame: list

    def to_dict(self) -> dict:
        return {"psnr": self.psnr, "ssim": self.ssim, "ms_ssim": self.ms_ssim,
                "per_frame": self.per_frame}


def scene_extent_from_cameras(cameras) -> float:
    """Radius of the bounding sphere of the camera centers."""
    centers = np.stack([c.center for c in cameras])
    mid = centers.mean(axis=0)
    return float(np.max(np.linalg.norm(centers - mid, axis=1)))


def _knn_log_scales(positions: np.ndarray, fallback: float) -> np.ndarray:
    """Isotropic log-scale init: log mean distance to the 3 nearest neighbors."""
    n = len(positions)
    if n < 2:
        return np.full((n, 3), np.log(max(fallback, 1e-7)))
    k = min(4, n)
    dists, _ = cKDTree(positions).query(positions, k=k)
    mean_d = dists[:, 1:].mean(axis=1)
    return np.repeat(np.log(np.maximum(mean_d, 1e-7))[:, None], 3, axis=1)


def _points_to_set(points: np.ndarray, colors: np.ndarray | None,
                   sh_degree: int, fallback_scale: float) -> GaussianSet:
    n = len(points)
    k = (sh_degree + 1) ** 2
    sh = np.zeros((n, k, 3))
    if colors is not None:
        sh[:, 0, :] = (np.asarray(colors, dtype=float) - 0.5) / SH_C0
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    return GaussianSet(
        points, rot, _knn_log_scales(np.asarray(points, dtype=float), fallback_scale),
        np.full(n, inverse_sigmoid(0.1)), sh,
    )


def init_scene(sfm_points, bbox, n_deformable: int, config: TrainConfig,
               scene_extent: float = 1.0,
               rng: np.random.Generator | None = None) -> Scene:
    """Inductive-bias-aware initialization.

    Deformable positions are uniform samples in ``bbox``; the static set
    copies the seed points (empty when absent or ``no_static``). The
    ``no_ib_init`` ablation initializes BOTH sets from the seed points.
    ``sfm_points`` is None or a (points (k,3), colors (k,3) or None) pair.
    """
    if n_deformable <= 0:
        raise ConfigError("n_deformable must be positive")
    rng = rng or np.random.default_rng(config.seed)
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    if np.any(hi <= lo):
        raise ConfigError("bounding box is degenerate")
    fallback_scale = 0.05 * float(np.linalg.norm(hi - lo))

    points = colors = None
    if sfm_points is not None:
        points, colors = sfm_points
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(points) == 0:
            points = None

    if config.no_ib_init and points is not None:
        # degraded configuration: both sets share the seed-cloud init
        deformable = _points_to_set(points, colors, config.sh_degree, fallback_scale)
    else:
        uniform = rng.uniform(lo, hi, size=(n_deformable, 3))
        deformable = _points_to_set(uniform, None, config.sh_degree, fallback_scale)

    if config.no_static:
        static = GaussianSet.empty(config.sh_degree)
    elif config.no_ib_init and points is None:
        # cloud-less fallback: both sets uniform (the other degraded init)
        static = _points_to_set(rng.uniform(lo, hi, size=(n_deformable, 3)),
                                None, config.sh_degree, fallback_scale)
    elif points is None:
        static = GaussianSet.empty(config.sh_degree)
    else:
        static = _points_to_set(points, colors, config.sh_degree, fallback_scale)

    field_rng = np.random.default_rng(config.seed + 1)
    dfield = DeformationField(
        l_x=config.l_x, l_t=config.l_t, depth=config.mlp_depth,
        width=config.mlp_width, skip_at=config.mlp_skip_at,
        sh_coeff_count=(config.sh_degree + 1) ** 2,
        deform_opacity=config.deform_opacity, deform_sh=config.deform_sh,
        rng=field_rng,
    )
    return Scene(deformable, static, dfield, scene_extent,
                 config.deform_config())


def compute_loss(image: np.ndarray, gt: np.ndarray, iteration: int,
                 lambda_ssim: float, loss_switch_iter: int = 20000,
                 no_lr_transit: bool = False):
    """Objective at one frame: weighted L2 (early) or L1 (late) plus SSIM.

    Returns (scalar loss, dLoss/dimage). ``no_lr_transit`` forces the L1
    branch at every iteration.
    """
    image = np.asarray(image, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if image.shape != gt.shape:
        raise ShapeError(f"image {image.shape} vs ground truth {gt.shape}")
    diff = image - gt
    n = diff.size
    use_l2 = (iteration <= loss_switch_iter) and not no_lr_transit
    if use_l2:
        photometric = float(np.mean(diff * diff))
        d_photo = 2.0 * diff / n
    else:
        photometric = float(np.mean(np.abs(diff)))
        d_photo = np.sign(diff) / n
    if lambda_ssim == 0.0:
        return photometric, d_photo
    s, d_s = ssim(image, gt, want_grad=True)
    loss = (1.0 - lambda_ssim) * photometric + lambda_ssim * (1.0 - s)
    d_image = (1.0 - lambda_ssim) * d_photo - lambda_ssim * d_s
    return loss, d_image


def render_scene(scene: Scene, camera: Camera, t: float, background,
                 retain_aux: bool = False):
    combined, sh_view = scene.gaussians_at(t)
    return render(combined.positions, combined.rotations, combined.log_scales,
                  combined.opacity_logits, combined.sh_coeffs, camera,
                  background, sh_view_positions=sh_view, retain_aux=retain_aux)


class _FieldAdam:
    """Adam states for every field parameter, as one group."""

    def __init__(self, dfield: DeformationField):
        self.states = {name: AdamState(p.shape) for name, p in dfield.named_params()}

    def step(self, dfield: DeformationField, grads: dict, lr: float):
        for name, p in list(dfield.named_params()):
            g = grads.get(name)
            if g is None:
                continue
            adam_step(self.states[name], p, g, lr)


def _set_lrs(config: TrainConfig, extent: float, iteration: int) -> dict:
    decay = lr_factor(iteration, config.lr_decay_iters, config.lr_final_factor)
    return {
        "positions": config.position_lr * extent * decay,
        "rotations": config.rotation_lr,
        "log_scales": config.scale_lr,
        "opacity_logits": config.opacity_lr,
        "sh_coeffs": config.sh_lr,
    }


def train(dataset, config: TrainConfig, log_path=None, checkpoint_dir=None,
          progress=None):
    """Optimize a Scene on the dataset's train split.

    Returns (scene, log) where log is a list of per-iteration dicts. Emits
    JSON-lines to ``log_path`` and snapshot checkpoints to ``checkpoint_dir``
    when given.
    """
    frames = dataset.train_frames()
    if not frames:
        raise EmptySplitError("dataset has no training frames")
    cameras = [f.camera for f in frames]
    extent = scene_extent_from_cameras(cameras)
    center = np.stack([c.center for c in cameras]).mean(axis=0)
    half = max(extent / 2.0, 1e-3)
    bbox = (center - half, center + half)

    rng = np.random.default_rng(config.seed)
    scene = init_scene(dataset.seed_cloud(), bbox, config.n_deformable, config,
                       scene_extent=extent, rng=rng)
    deform_cfg = scene.deform_config

    adam_def = SetAdam(scene.deformable)
    adam_static = SetAdam(scene.static)
    adam_field = _FieldAdam(scene.field)
    stats_def = DensifyStats(len(scene.deformable))
    stats_static = DensifyStats(len(scene.static))
    thresholds = DensifyThresholds(
        grad_threshold=config.densify_grad_threshold,
        split_scale_fraction=config.split_scale_fraction,
        prune_opacity=config.prune_opacity,
    )
    background = np.asarray(config.background, dtype=float)

    log = []
    log_file = open(log_path, "w") if log_path else None
    shuffle_rng = np.random.default_rng(config.seed + 2)
    split_rng = np.random.default_rng(config.seed + 3)
    order = []
    t_start = time.time()
    try:
        for iteration in range(1, config.iterations + 1):
            if not order:
                order = list(shuffle_rng.permutation(len(frames)))
            frame = frames[order.pop()]
            gt = frame.pixels
            use_field = iteration > config.warmup_iters

            # forward
            if use_field:
                f_out, f_cache = scene.field.forward(scene.deformable.positions,
                                                     frame.time, want_cache=True)
                warped, w_cache = apply_deformation_batch(
                    scene.deformable, f_out, deform_cfg, want_cache=True)
            else:
                warped, w_cache, f_cache = scene.deformable, None, None
            combined = GaussianSet.concat(warped, scene.static)
            sh_view = np.concatenate([scene.deformable.positions,
                                      scene.static.positions]) \
                if len(scene.static) else scene.deformable.positions
            out = render(combined.positions, combined.rotations,
                         combined.log_scales, combined.opacity_logits,
                         combined.sh_coeffs, frame.camera, background,
                         sh_view_positions=sh_view, retain_aux=True)
            loss, d_image = compute_loss(out.image, gt, iteration,
                                         config.lambda_ssim,
                                         config.loss_switch_iter,
                                         config.no_lr_transit)

            # backward
            grads, d_sh_view = render_backward(out, d_image, split_sh_position=True)
            nd = len(scene.deformable)
            radii = np.zeros(len(combined))
            proj = out.aux["projection"]
            radii[proj.visible] = proj.radius

            try:
                if use_field:
                    grads_t = {
                        "positions": grads.positions[:nd],
                        "rotations": grads.rotations[:nd],
                        "log_scales": grads.log_scales[:nd],
                        "opacity_logits": grads.opacity_logits[:nd],
                        "sh_coeffs": grads.sh_coeffs[:nd],
                    }
                    canon, deltas = apply_deformation_backward(
                        scene.deformable, f_out, w_cache, grads_t)
                    canon["positions"] = canon["positions"] + d_sh_view[:nd]
                    if config.detach_field_position:
                        field_grads = scene.field.backward(f_cache, deltas)
                    else:
                        field_grads, d_enc_pos = scene.field.backward(
                            f_cache, deltas, want_input_grad=True)
                        canon["positions"] = canon["positions"] + d_enc_pos
                    adam_field.step(scene.field, field_grads,
                                    config.field_lr * lr_factor(
                                        iteration, config.lr_decay_iters,
                                        config.lr_final_factor))
                else:
                    canon = {
                        "positions": grads.positions[:nd] + d_sh_view[:nd],
                        "rotations": grads.rotations[:nd],
                        "log_scales": grads.log_scales[:nd],
                        "opacity_logits": grads.opacity_logits[:nd],
                        "sh_coeffs": grads.sh_coeffs[:nd],
                    }
                lrs = _set_lrs(config, extent, iteration)
                adam_def.step(scene.deformable, canon, lrs)
                if len(scene.static):
                    static_grads = {
                        "positions": grads.positions[nd:] + d_sh_view[nd:],
                        "rotations": grads.rotations[nd:],
                        "log_scales": grads.log_scales[nd:],
                        "opacity_logits": grads.opacity_logits[nd:],
                        "sh_coeffs": grads.sh_coeffs[nd:],
                    }
                    adam_static.step(scene.static, static_grads, lrs)
            except NonFiniteGradient:
                dump = {"iteration": iteration, "loss": loss,
                        "event": "non_finite_gradient",
                        "frame_time": frame.time}
                if log_file:
                    log_file.write(json.dumps(dump) + "\n")
                    log_file.close()
                raise

            # densification bookkeeping
            accumulate_stats(stats_def, grads.screen_grad_norm[:nd],
                             grads.visible[:nd],
                             world_grads=canon["positions"], radii=radii[:nd])
            if len(scene.static):
                accumulate_stats(stats_static, grads.screen_grad_norm[nd:],
                                 grads.visible[nd:],
                                 world_grads=grads.positions[nd:],
                                 radii=radii[nd:])
            if (config.densify_start <= iteration <= config.densify_until
                    and iteration % config.densify_interval == 0):
                scene.deformable, stats_def, _ = densify_and_prune(
                    scene.deformable, stats_def, adam_def, thresholds, extent,
                    split_rng, image_max_dim=max(frame.camera.width,
                                                 frame.camera.height))
                if len(scene.static):
                    scene.static, stats_static, _ = densify_and_prune(
                        scene.static, stats_static, adam_static, thresholds,
                        extent, split_rng,
                        image_max_dim=max(frame.camera.width, frame.camera.height))

            if (config.opacity_reset_interval
                    and iteration % config.opacity_reset_interval == 0):
                cap = inverse_sigmoid(0.01)
                scene.deformable.opacity_logits = np.minimum(
                    scene.deformable.opacity_logits, cap)
                if len(scene.static):
                    scene.static.opacity_logits = np.minimum(
                        scene.static.opacity_logits, cap)

            entry = {"iter": iteration, "loss": loss,
                     "n_deformable": len(scene.deformable),
                     "n_static": len(scene.static),
                     "lr_field": config.field_lr * lr_factor(
                         iteration, config.lr_decay_iters, config.lr_final_factor)}
            log.append(entry)
            if log_file:
                log_file.write(json.dumps(entry) + "\n")
            if progress and iteration % 100 == 0:
                progress(entry)
            if (checkpoint_dir and config.checkpoint_interval
                    and iteration % config.checkpoint_interval == 0):
                from .snapshot import save_snapshot
                save_snapshot(scene, f"{checkpoint_dir}/iter_{iteration:06d}.snap",
                              config=config, iteration=iteration,
                              camera_meta=dataset.camera_meta())
    finally:
        if log_file:
            log_file.close()
    if progress:
        progress({"done": True, "seconds": time.time() - t_start})
    return scene, log


def _quantize8(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def evaluate(scene: Scene, dataset, background=None) -> Metrics:
    """Render every held-out frame at its timestamp and average the metrics.

    Both the render and the ground truth are snapped to the 8-bit grid the
    dataset images are stored in, so a model that reproduces the stored
    bytes scores exactly at the PSNR cap.
    """
    frames = dataset.test_frames()
    if not frames:
        raise EmptySplitError("dataset has no test frames")
    background = np.asarray(
        background if background is not None else (1.0, 1.0, 1.0), dtype=float)
    per_frame = []
    for f in frames:
        img = _quantize8(render_scene(scene, f.camera, f.time, background).image)
        gt = _quantize8(f.pixels)
        per_frame.append({
            "time": f.time,
            "psnr": psnr(img, gt),
            "ssim": ssim(img, gt),
            "ms_ssim": ms_ssim(img, gt),
        })
    return Metrics(
        psnr=float(np.mean([m["psnr"] for m in per_frame])),
        ssim=float(np.mean([m["ssim"] for m in per_frame])),
        ms_ssim=float(np.mean([m["ms_ssim"] for m in per_frame])),
        per_frame=per_frame,
    )


ABLATION_VARIANTS = (
    ("Fix Scale", {"fix_scale": True}),
    ("Deform Opacity", {"deform_opacity": True}),
    ("Deform SH", {"deform_sh": True}),
    ("Quaternion Addition", {"quaternion_addition": True}),
    ("No IB Init", {"no_ib_init": True}),
    ("No Static Gaussians", {"no_static": True}),
    ("Scale Post-exponentiate", {"scale_post_exp": True}),
    ("No LR Transit", {"no_lr_transit": True}),
    ("Full", {}),
)


def run_ablation_suite(dataset, base_config: TrainConfig, progress=None) -> list:
    """Train all ablation variants and report PSNR/SSIM/MS-SSIM per row."""
    rows = []
    for name, flags in ABLATION_VARIANTS:
        cfg = replace(base_config, **flags)
        if progress:
            progress({"variant": name, "status": "training"})
        scene, _ = train(dataset, cfg)
        metrics = evaluate(scene, dataset, background=cfg.background)
        rows.append({"variant": name, "psnr": metrics.psnr,
                     "ssim": metrics.ssim, "ms_ssim": metrics.ms_ssim})
        if progress:
            progress(rows[-1])
    return rows
