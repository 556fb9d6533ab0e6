import numpy as np
import pytest

from conftest import random_gaussian_set
from dynasplat.core_math import inverse_sigmoid, sigmoid
from dynasplat.errors import NonFiniteGradient, ShapeError
from dynasplat.optimizer import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    AdamState,
    DensifyStats,
    DensifyThresholds,
    SetAdam,
    SPLIT_SCALE_SHRINK,
    accumulate_stats,
    adam_step,
    densify_and_prune,
    lr_factor,
)


class ScalarAdamOracle:
    """Independent scalar re-implementation of the update rule."""

    def __init__(self, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.m = 0.0
        self.v = 0.0
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, theta, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def test_zero_gradient_keeps_parameters():
    state = AdamState((3,))
    params = np.array([1.0, -2.0, 3.0])
    adam_step(state, params, np.zeros(3), 0.1)
    assert np.array_equal(params, [1.0, -2.0, 3.0])
    assert not np.any(state.m) and not np.any(state.v)


def test_first_step_is_signed_lr():
    lr = 0.01
    for g in (3.7, -0.004):
        state = AdamState(())
        params = np.array(1.0)
        adam_step(state, params, np.array(g), lr)
        assert abs((1.0 - params) - lr * np.sign(g)) < lr * 1e-6


def test_hundred_step_trajectory_matches_oracle(rng):
    state = AdamState(())
    params = np.array(0.5)
    oracle = ScalarAdamOracle()
    theta = 0.5
    lr = 0.003
    for i in range(100):
        g = float(np.sin(0.1 * i) + 0.3)
        adam_step(state, params, np.array(g), lr)
        theta = oracle.step(theta, g, lr)
        assert abs(float(params) - theta) <= 1e-12


def test_nan_gradient_aborts():
    state = AdamState((2,))
    params = np.array([1.0, 2.0])
    with pytest.raises(NonFiniteGradient):
        adam_step(state, params, np.array([np.nan, 0.0]), 0.1)
    assert np.array_equal(params, [1.0, 2.0])
    assert state.step == 0


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(AdamState((2,)), np.zeros(2), np.zeros(3), 0.1)


def test_lr_factor_endpoints():
    assert lr_factor(0) == 1.0
    assert lr_factor(30000) == 0.001
    assert lr_factor(50000) == 0.001
    assert abs(lr_factor(15000) - 0.001 ** 0.5) < 1e-15


# --- density control ---------------------------------------------------------

def _stats_for(gset):
    return DensifyStats(len(gset))


def test_quiet_set_unchanged(rng):
    gset = random_gaussian_set(rng, 10, opacity_range=(0.3, 0.9))
    stats = _stats_for(gset)
    accumulate_stats(stats, np.full(10, 1e-6), np.ones(10, dtype=bool))
    new, _, report = densify_and_prune(gset, stats, None, DensifyThresholds(),
                                       scene_extent=5.0,
                                       rng=np.random.default_rng(0))
    assert len(new) == 10
    assert np.array_equal(new.positions, gset.positions)
    assert report.cloned == report.split == report.pruned == 0


def test_low_opacity_pruned(rng):
    gset = random_gaussian_set(rng, 5)
    gset.opacity_logits[2] = inverse_sigmoid(0.001)
    stats = _stats_for(gset)
    new, _, report = densify_and_prune(gset, stats, None, DensifyThresholds(),
                                       5.0, np.random.default_rng(0))
    assert len(new) == 4
    assert report.pruned == 1
    assert np.all(sigmoid(new.opacity_logits) >= 0.005)


def test_split_rule(rng):
    gset = random_gaussian_set(rng, 3, scale_range=(0.2, 0.3))
    extent = 1.0  # max scale 0.3 >= 0.01 * 1.0 -> split
    stats = _stats_for(gset)
    stats.grad_accum[1] = 1.0
    stats.count[1] = 1
    parent_scale = gset.log_scales[1].copy()
    new, _, report = densify_and_prune(gset, stats, None, DensifyThresholds(),
                                       extent, np.random.default_rng(0))
    assert report.split == 1
    assert len(new) == 4  # net +1
    children = new.log_scales[-2:]
    assert np.allclose(children, parent_scale - SPLIT_SCALE_SHRINK)


def test_clone_rule(rng):
    gset = random_gaussian_set(rng, 3, scale_range=(0.01, 0.02))
    extent = 10.0  # max scale << 0.01 * 10 -> clone
    stats = _stats_for(gset)
    stats.grad_accum[0] = 1.0
    stats.count[0] = 1
    stats.world_grad_accum[0] = np.array([1.0, 0, 0])
    new, _, report = densify_and_prune(gset, stats, None, DensifyThresholds(),
                                       extent, np.random.default_rng(0))
    assert report.cloned == 1
    assert len(new) == 4
    # clone keeps all attributes; position nudged along the gradient
    assert np.allclose(new.rotations[3], gset.rotations[0])
    offset = new.positions[3] - gset.positions[0]
    assert offset[0] > 0 and abs(offset[1]) < 1e-12


def test_adam_rows_stay_aligned(rng):
    gset = random_gaussian_set(rng, 6, scale_range=(0.2, 0.3))
    adam = SetAdam(gset)
    adam.states["positions"].m[:] = 1.0
    stats = _stats_for(gset)
    stats.grad_accum[:2] = 1.0
    stats.count[:2] = 1
    gset.opacity_logits[5] = inverse_sigmoid(0.001)
    new, new_stats, report = densify_and_prune(gset, stats, adam,
                                               DensifyThresholds(), 1.0,
                                               np.random.default_rng(0))
    for attr in SetAdam.ATTRS:
        assert adam.states[attr].m.shape == getattr(new, attr).shape
        assert adam.states[attr].v.shape == getattr(new, attr).shape
    assert len(new_stats) == len(new)
    # fresh rows start from zero moments
    assert not np.any(adam.states["positions"].m[len(gset) - 2 - 1:])


def test_prune_idempotent(rng):
    gset = random_gaussian_set(rng, 8)
    gset.opacity_logits[[1, 4]] = inverse_sigmoid(0.001)
    stats = _stats_for(gset)
    once, stats2, _ = densify_and_prune(gset, stats, None, DensifyThresholds(),
                                        5.0, np.random.default_rng(0))
    twice, _, report = densify_and_prune(once, stats2, None, DensifyThresholds(),
                                         5.0, np.random.default_rng(0))
    assert len(twice) == len(once)
    assert np.array_equal(twice.positions, once.positions)
    assert report.pruned == 0


def test_stats_accumulate_mean(rng):
    stats = DensifyStats(3)
    accumulate_stats(stats, np.array([1.0, 0.0, 2.0]),
                     np.array([True, False, True]))
    accumulate_stats(stats, np.array([3.0, 5.0, 4.0]),
                     np.array([True, False, True]))
    assert stats.count[0] == 2 and stats.count[1] == 0
    assert stats.grad_accum[0] / stats.count[0] == 2.0
    assert stats.grad_accum[1] == 0.0  # invisible rows untouched


def test_stats_match_per_frame_sum(rng):
    stats_a = DensifyStats(5)
    frames = [(rng.uniform(size=5), rng.uniform(size=5) > 0.4) for _ in range(6)]
    for norms, vis in frames:
        accumulate_stats(stats_a, norms, vis)
    total = np.zeros(5)
    counts = np.zeros(5, dtype=int)
    for norms, vis in frames:
        total[vis] += norms[vis]
        counts[vis] += 1
    assert np.allclose(stats_a.grad_accum, total)
    assert np.array_equal(stats_a.count, counts)


def test_independent_stats_per_set(rng):
    a = DensifyStats(4)
    b = DensifyStats(4)
    accumulate_stats(a, np.ones(4), np.ones(4, dtype=bool))
    assert not np.any(b.grad_accum)
    assert not np.any(b.count)


def test_densify_never_produces_nan(rng):
    gset = random_gaussian_set(rng, 20, scale_range=(0.005, 0.4))
    stats = _stats_for(gset)
    stats.grad_accum[:] = rng.uniform(0, 1e-3, 20)
    stats.count[:] = 1
    stats.world_grad_accum[:] = rng.normal(size=(20, 3))
    new, _, _ = densify_and_prune(gset, stats, None, DensifyThresholds(), 1.0,
                                  np.random.default_rng(1))
    for attr in SetAdam.ATTRS:
        assert np.all(np.isfinite(getattr(new, attr)))
