"""Shared compositing constants.

The reference renderer and the tile renderer apply identical rules so the
two paths agree to float tolerance and the output is tile-size independent:
  - a splat contributes only inside its 3-sigma ellipse (POWER_CUTOFF bounds
    0.5 * d^T Sigma'^-1 d),
  - per-splat alpha = min(ALPHA_CLAMP, opacity * exp(-power)),
  - contributions with alpha < ALPHA_SKIP are skipped,
  - compositing stops before the splat that would drop transmittance below
    T_TERMINATE.
"""

ALPHA_CLAMP = 0.99
ALPHA_SKIP = 1.0 / 255.0
T_TERMINATE = 1e-4
POWER_CUTOFF = 4.5  # 0.5 * 3^2 : the 3-sigma ellipse
LOW_PASS = 0.3      # added to both cov2d diagonal entries before inversion
Z_NEAR = 0.01
TILE_SIZE = 16
