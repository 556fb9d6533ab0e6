import numpy as np
import pytest

from conftest import orbit_camera, random_gaussian_set, relative_error
from dynasplat.errors import StateError
from dynasplat.gaussians import GaussianSet
from dynasplat.rasterizer import rasterize_backward, render
from dynasplat.rasterizer.backward import background_gradient


def _render_set(gset, cam, bg=(1.0, 1.0, 1.0), **kw):
    return render(gset.positions, gset.rotations, gset.log_scales,
                  gset.opacity_logits, gset.sh_coeffs, cam, bg, **kw)


def fd_check_scene(gset, cam, weights, h=1e-5, tol=1e-3, bg=(1.0, 1.0, 1.0)):
    """Central-difference check of every parameter of every Gaussian."""
    out = _render_set(gset, cam, bg, retain_aux=True)
    grads = rasterize_backward(out, weights)

    def loss_with(attr, arrays):
        kwargs = {a: getattr(gset, a) for a in
                  ("positions", "rotations", "log_scales", "opacity_logits", "sh_coeffs")}
        kwargs[attr] = arrays
        img = render(kwargs["positions"], kwargs["rotations"], kwargs["log_scales"],
                     kwargs["opacity_logits"], kwargs["sh_coeffs"], cam, bg).image
        return float((img * weights).sum())

    worst = 0.0
    for attr, grad in (("positions", grads.positions),
                       ("rotations", grads.rotations),
                       ("log_scales", grads.log_scales),
                       ("opacity_logits", grads.opacity_logits),
                       ("sh_coeffs", grads.sh_coeffs)):
        base = getattr(gset, attr)
        flat_grad = np.asarray(grad).ravel()
        for flat_idx in range(base.size):
            idx = np.unravel_index(flat_idx, base.shape)
            plus = base.copy()
            plus[idx] += h
            minus = base.copy()
            minus[idx] -= h
            fd = (loss_with(attr, plus) - loss_with(attr, minus)) / (2 * h)
            rel = relative_error(fd, flat_grad[flat_idx])
            worst = max(worst, rel)
            assert rel < tol, f"{attr}{idx}: fd={fd} analytic={flat_grad[flat_idx]}"
    return worst


def test_zero_upstream_gives_zero_grads(rng):
    gset = random_gaussian_set(rng, 10)
    cam = orbit_camera(32, 32)
    out = _render_set(gset, cam, retain_aux=True)
    grads = rasterize_backward(out, np.zeros_like(out.image))
    assert not np.any(grads.positions)
    assert not np.any(grads.rotations)
    assert not np.any(grads.log_scales)
    assert not np.any(grads.opacity_logits)
    assert not np.any(grads.sh_coeffs)


def test_missing_aux_raises():
    cam = orbit_camera(16, 16)
    from dynasplat.rasterizer import rasterize_forward
    out = rasterize_forward([], cam, (1, 1, 1))
    with pytest.raises(StateError):
        rasterize_backward(out, np.zeros((16, 16, 3)))


def test_fd_agreement_small_scene():
    rng = np.random.default_rng(11)
    gset = random_gaussian_set(rng, 6, opacity_range=(0.2, 0.85))
    cam = orbit_camera(32, 32, azimuth=0.7)
    weights = np.random.default_rng(5).normal(size=(32, 32, 3))
    fd_check_scene(gset, cam, weights)


def test_occluded_gaussian_gets_zero_color_gradient():
    # two stacked opaque splats drive transmittance to the termination
    # floor, so a splat behind them is never composited
    cam = orbit_camera(33, 33, radius=4.0, azimuth=0.0, height_z=0.0)
    # camera at (4,0,0) looking along -x: larger x is closer to the camera
    positions = np.array([[1.2, 0.0, 0.0],
                          [1.0, 0.0, 0.0],
                          [-1.5, 0.0, 0.0]])  # behind, small
    rotations = np.tile([1.0, 0, 0, 0], (3, 1))
    log_scales = np.log(np.array([[1.2] * 3, [1.2] * 3, [0.05] * 3]))
    opacity = np.array([12.0, 12.0, 2.0])  # sigmoid(12) > 0.99 -> clamped
    sh = np.zeros((3, 4, 3))
    out = render(positions, rotations, log_scales, opacity, sh, cam,
                 (1.0, 1.0, 1.0), retain_aux=True)
    grads = rasterize_backward(out, np.ones_like(out.image))
    assert np.any(grads.sh_coeffs[0])
    assert np.array_equal(grads.sh_coeffs[2], np.zeros((4, 3)))


def test_background_gradient_equals_transmittance(rng):
    gset = random_gaussian_set(rng, 20)
    cam = orbit_camera(24, 24)
    out = _render_set(gset, cam, retain_aux=True)
    d_image = rng.normal(size=out.image.shape)
    analytic = background_gradient(out, d_image)
    h = 1e-6
    for c in range(3):
        bg_p = np.array([1.0, 1.0, 1.0])
        bg_p[c] += h
        bg_m = np.array([1.0, 1.0, 1.0])
        bg_m[c] -= h
        lp = float((_render_set(gset, cam, tuple(bg_p)).image * d_image).sum())
        lm = float((_render_set(gset, cam, tuple(bg_m)).image * d_image).sum())
        fd = (lp - lm) / (2 * h)
        assert relative_error(fd, analytic[c]) < 1e-6


def test_backward_deterministic_across_thread_counts(rng):
    import numba
    gset = random_gaussian_set(rng, 40)
    cam = orbit_camera(48, 48)
    d_image = rng.normal(size=(48, 48, 3))
    results = []
    for threads in (1, 2):
        numba.set_num_threads(threads)
        out = _render_set(gset, cam, retain_aux=True)
        grads = rasterize_backward(out, d_image)
        results.append((out.image.copy(), grads.positions.copy(),
                        grads.sh_coeffs.copy()))
    numba.set_num_threads(2)
    assert np.array_equal(results[0][0], results[1][0])
    assert np.array_equal(results[0][1], results[1][1])
    assert np.array_equal(results[0][2], results[1][2])
