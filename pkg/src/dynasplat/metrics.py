"""Image quality metrics: SSIM (with analytic backward), PSNR, MS-SSIM.

SSIM uses an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic
range 1.0, averaged over valid (unpadded) window positions; color images are
scored per channel and averaged.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
PSNR_CAP = 99.0


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=float) - (size - 1) / 2.0
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


_WINDOW = _gaussian_window()
_HALF = SSIM_WINDOW // 2


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2D correlation, cropped to valid window positions."""
    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    h = len(kernel) // 2
    return out[h:img.shape[0] - h, h:img.shape[1] - h]


def _spread_full(partial: np.ndarray, kernel: np.ndarray, shape) -> np.ndarray:
    """Adjoint of _filter_valid: scatter window-level values back to pixels."""
    h = len(kernel) // 2
    padded = np.zeros(shape)
    padded[h:shape[0] - h, h:shape[1] - h] = partial
    out = correlate1d(padded, kernel, axis=0, mode="constant")
    return correlate1d(out, kernel, axis=1, mode="constant")


def _as_channels(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img[:, :, None]
    if img.ndim == 3 and img.shape[2] in (1, 3):
        return img
    raise ShapeError(f"expected HxW or HxWxC image, got shape {img.shape}")


def _ssim_channel(c1: np.ndarray, c2: np.ndarray, want_grad: bool):
    """Mean SSIM of one channel plus, optionally, its gradient w.r.t. c1."""
    C1 = (SSIM_K1 * 1.0) ** 2
    C2 = (SSIM_K2 * 1.0) ** 2
    mu1 = _filter_valid(c1, _WINDOW)
    mu2 = _filter_valid(c2, _WINDOW)
    e11 = _filter_valid(c1 * c1, _WINDOW)
    e22 = _filter_valid(c2 * c2, _WINDOW)
    e12 = _filter_valid(c1 * c2, _WINDOW)

    a1 = 2.0 * mu1 * mu2 + C1
    a2 = 2.0 * (e12 - mu1 * mu2) + C2
    b1 = mu1 * mu1 + mu2 * mu2 + C1
    b2 = (e11 - mu1 * mu1) + (e22 - mu2 * mu2) + C2
    s_map = (a1 * a2) / (b1 * b2)
    value = float(s_map.mean())
    if not want_grad:
        return value, None

    n_win = s_map.size
    # partials of S = a1*a2/(b1*b2) w.r.t. mu1, e11, e12 (e22, mu2 are constants)
    d_mu1 = (2.0 * mu2 * (a2 - a1) / (b1 * b2)
             - 2.0 * mu1 * s_map * (1.0 / b1 - 1.0 / b2))
    d_e11 = -s_map / b2
    d_e12 = 2.0 * a1 / (b1 * b2)
    scale = 1.0 / n_win
    grad = _spread_full(d_mu1 * scale, _WINDOW, c1.shape)
    grad += 2.0 * c1 * _spread_full(d_e11 * scale, _WINDOW, c1.shape)
    grad += c2 * _spread_full(d_e12 * scale, _WINDOW, c1.shape)
    return value, grad


def ssim(img1: np.ndarray, img2: np.ndarray, want_grad: bool = False):
    """Mean SSIM over valid windows; channels averaged.

    Returns the scalar, or (scalar, dSSIM/dimg1) when ``want_grad``.
    """
    c1s = _as_channels(img1)
    c2s = _as_channels(img2)
    if c1s.shape != c2s.shape:
        raise ShapeError(f"image shapes differ: {c1s.shape} vs {c2s.shape}")
    if c1s.shape[0] < SSIM_WINDOW or c1s.shape[1] < SSIM_WINDOW:
        raise ShapeError(
            f"image {c1s.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    n_ch = c1s.shape[2]
    total = 0.0
    grad = np.zeros(c1s.shape) if want_grad else None
    for ch in range(n_ch):
        value, g = _ssim_channel(c1s[:, :, ch], c2s[:, :, ch], want_grad)
        total += value
        if want_grad:
            grad[:, :, ch] = g / n_ch
    mean = total / n_ch
    if want_grad:
        if np.asarray(img1).ndim == 2:
            grad = grad[:, :, 0]
        return mean, grad
    return mean


def psnr(img1: np.ndarray, img2: np.ndarray) -> float:
    """10*log10(1/MSE) in dB for [0,1] images, capped at 99."""
    a = np.asarray(img1, dtype=float)
    b = np.asarray(img2, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _contrast_structure(c1: np.ndarray, c2: np.ndarray) -> float:
    C2 = (SSIM_K2 * 1.0) ** 2
    mu1 = _filter_valid(c1, _WINDOW)
    mu2 = _filter_valid(c2, _WINDOW)
    e11 = _filter_valid(c1 * c1, _WINDOW)
    e22 = _filter_valid(c2 * c2, _WINDOW)
    e12 = _filter_valid(c1 * c2, _WINDOW)
    a2 = 2.0 * (e12 - mu1 * mu2) + C2
    b2 = (e11 - mu1 * mu1) + (e22 - mu2 * mu2) + C2
    return float((a2 / b2).mean())


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] & ~1, img.shape[1] & ~1
    c = img[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def ms_ssim(img1: np.ndarray, img2: np.ndarray, log=None) -> float:
    """Multi-scale SSIM, 5 scales with the standard weights.

    Images too small for 5 dyadic scales fall back to the largest feasible
    count with renormalized weights (reported through ``log`` if given).
    """
    c1s = _as_channels(img1)
    c2s = _as_channels(img2)
    if c1s.shape != c2s.shape:
        raise ShapeError(f"image shapes differ: {c1s.shape} vs {c2s.shape}")
    side = min(c1s.shape[0], c1s.shape[1])
    n_scales = len(MS_SSIM_WEIGHTS)
    while n_scales > 1 and side // (2 ** (n_scales - 1)) < SSIM_WINDOW:
        n_scales -= 1
    if side < SSIM_WINDOW:
        raise ShapeError("image smaller than the SSIM window at every scale")
    weights = np.array(MS_SSIM_WEIGHTS[:n_scales])
    weights = weights / weights.sum()
    if n_scales < len(MS_SSIM_WEIGHTS) and log is not None:
        log(f"ms_ssim: falling back to {n_scales} scales for image {c1s.shape[:2]}")

    n_ch = c1s.shape[2]
    result = 1.0
    a, b = c1s, c2s
    for scale in range(n_scales):
        if scale == n_scales - 1:
            val = np.mean([_ssim_channel(a[:, :, ch], b[:, :, ch], False)[0]
                           for ch in range(n_ch)])
        else:
            val = np.mean([_contrast_structure(a[:, :, ch], b[:, :, ch])
                           for ch in range(n_ch)])
            a = _downsample2(a)
            b = _downsample2(b)
        result *= max(val, 0.0) ** weights[scale]
    return float(result)
