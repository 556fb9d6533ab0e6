"""Adam optimization, learning-rate schedule, and adaptive density control.

Densification operates on one Gaussian set at a time (static and deformable
sets each keep their own stats and Adam rows) and keeps optimizer state
aligned with the set under cloning, splitting and pruning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_math import covariance_from_batch, sigmoid
from .errors import NonFiniteGradient, ShapeError
from .gaussians import GaussianSet

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-15

# Density-control defaults (standard splatting practice; configurable).
GRAD_THRESHOLD = 2e-4
SPLIT_SCALE_FRACTION = 0.01
PRUNE_OPACITY = 0.005
SPLIT_SCALE_SHRINK = np.log(1.6)
CLONE_STEP_FRACTION = 0.05


class AdamState:
    """First/second moment accumulators for one parameter array."""

    __slots__ = ("m", "v", "step", "beta1", "beta2", "eps")

    def __init__(self, shape, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.step = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              lr: float) -> np.ndarray:
    """One bias-corrected Adam update, in place. Returns ``params``.

    A non-finite gradient aborts the step (parameters and moments untouched).
    """
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape:
        raise ShapeError(f"grad shape {grads.shape} != param shape {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("non-finite gradient; Adam step aborted")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def lr_factor(iteration: int, total_decay_iters: int = 30000,
              final_factor: float = 0.001) -> float:
    """Exponential decay factor: 1 at iteration 0, final_factor from 30K on."""
    frac = min(max(iteration, 0), total_decay_iters) / total_decay_iters
    return float(final_factor ** frac)


@dataclass
class DensifyThresholds:
    grad_threshold: float = GRAD_THRESHOLD
    split_scale_fraction: float = SPLIT_SCALE_FRACTION
    prune_opacity: float = PRUNE_OPACITY
    max_screen_radius_fraction: float = 1.0  # of max(image dims); pathological above


class DensifyStats:
    """Accumulated screen-space gradient pressure per Gaussian."""

    __slots__ = ("grad_accum", "count", "world_grad_accum", "max_radius")

    def __init__(self, n: int):
        self.grad_accum = np.zeros(n)
        self.count = np.zeros(n, dtype=np.int64)
        self.world_grad_accum = np.zeros((n, 3))
        self.max_radius = np.zeros(n)

    def __len__(self) -> int:
        return len(self.grad_accum)

    def reset(self):
        self.grad_accum[:] = 0.0
        self.count[:] = 0
        self.world_grad_accum[:] = 0.0
        self.max_radius[:] = 0.0


def accumulate_stats(stats: DensifyStats, screen_grad_norm, visible,
                     world_grads=None, radii=None) -> DensifyStats:
    """Add one frame of gradient norms for the Gaussians visible in it."""
    if len(stats) != len(screen_grad_norm):
        raise ShapeError("stats length does not match gradient array")
    visible = np.asarray(visible, dtype=bool)
    stats.grad_accum[visible] += np.asarray(screen_grad_norm, dtype=float)[visible]
    stats.count[visible] += 1
    if world_grads is not None:
        stats.world_grad_accum[visible] += np.asarray(world_grads, dtype=float)[visible]
    if radii is not None:
        r = np.where(visible, np.asarray(radii, dtype=float), 0.0)
        np.maximum(stats.max_radius, r, out=stats.max_radius)
    return stats


class SetAdam:
    """Adam states for the five attribute arrays of one Gaussian set."""

    ATTRS = ("positions", "rotations", "log_scales", "opacity_logits", "sh_coeffs")

    def __init__(self, gset: GaussianSet):
        self.states = {a: AdamState(getattr(gset, a).shape) for a in self.ATTRS}

    def step(self, gset: GaussianSet, grads: dict, lrs: dict):
        for a in self.ATTRS:
            adam_step(self.states[a], getattr(gset, a), grads[a], lrs[a])

    def extend_rows(self, n_new: int):
        for a, st in self.states.items():
            pad = (n_new,) + st.m.shape[1:]
            st.m = np.concatenate([st.m, np.zeros(pad)])
            st.v = np.concatenate([st.v, np.zeros(pad)])

    def select_rows(self, keep):
        for st in self.states.values():
            st.m = st.m[keep]
            st.v = st.v[keep]


@dataclass
class DensifyReport:
    cloned: int = 0
    split: int = 0
    pruned: int = 0


def densify_and_prune(gset: GaussianSet, stats: DensifyStats, adam: SetAdam | None,
                      thresholds: DensifyThresholds, scene_extent: float,
                      rng: np.random.Generator, image_max_dim: int | None = None):
    """Clone/split high-gradient Gaussians, prune transparent or huge ones.

    Returns (new_set, new_stats, DensifyReport). ``adam`` rows are kept
    aligned (zeros for new Gaussians, dropped rows for removed ones).
    """
    n = len(gset)
    if len(stats) != n:
        raise ShapeError("densify stats misaligned with Gaussian set")
    report = DensifyReport()

    counts = np.maximum(stats.count, 1)
    mean_grad = stats.grad_accum / counts
    pressure = (mean_grad > thresholds.grad_threshold) & (stats.count > 0)
    max_scale = np.exp(gset.log_scales).max(axis=1)
    small = max_scale < thresholds.split_scale_fraction * scene_extent
    clone_mask = pressure & small
    split_mask = pressure & ~small

    new_parts = [gset]
    # clones: duplicate, nudged along the accumulated positional gradient
    if np.any(clone_mask):
        clones = gset.select(clone_mask)
        wg = stats.world_grad_accum[clone_mask] / counts[clone_mask, None]
        norm = np.linalg.norm(wg, axis=1, keepdims=True)
        direction = np.where(norm > 1e-12, wg / np.maximum(norm, 1e-12), 0.0)
        step = CLONE_STEP_FRACTION * np.exp(clones.log_scales).mean(axis=1, keepdims=True)
        clones.positions = clones.positions + step * direction
        new_parts.append(clones)
        report.cloned = int(clone_mask.sum())

    # splits: two children sampled from the parent's distribution, shrunk
    if np.any(split_mask):
        parents = gset.select(split_mask)
        k = len(parents)
        cov = covariance_from_batch(parents.rotations /
                                    np.linalg.norm(parents.rotations, axis=1, keepdims=True),
                                    parents.log_scales)
        chol = np.linalg.cholesky(cov)
        children = []
        for _ in range(2):
            child = parents.copy()
            eps = rng.standard_normal((k, 3))
            child.positions = parents.positions + np.einsum("nij,nj->ni", chol, eps)
            child.log_scales = parents.log_scales - SPLIT_SCALE_SHRINK
            children.append(child)
        new_parts.extend(children)
        report.split = int(split_mask.sum())

    merged = new_parts[0]
    for part in new_parts[1:]:
        merged = GaussianSet.concat(merged, part)
    n_added = len(merged) - n
    if adam is not None and n_added > 0:
        adam.extend_rows(n_added)

    # prune: split parents, low opacity, pathological screen footprint
    keep = np.ones(len(merged), dtype=bool)
    keep[:n] &= ~split_mask
    keep[:n] &= sigmoid(gset.opacity_logits) >= thresholds.prune_opacity
    if image_max_dim is not None:
        keep[:n] &= stats.max_radius <= thresholds.max_screen_radius_fraction * image_max_dim
    report.pruned = int(n - keep[:n].sum() - split_mask.sum())

    pruned_set = merged.select(keep)
    if adam is not None:
        adam.select_rows(keep)
    new_stats = DensifyStats(len(pruned_set))
    return pruned_set, new_stats, report
