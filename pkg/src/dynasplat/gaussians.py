"""Gaussian primitive containers.

``Gaussian`` is the single-primitive record used at API boundaries;
``GaussianSet`` is the struct-of-arrays form everything vectorized runs on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class Gaussian:
    """One anisotropic primitive.

    position: world-space center (3,)
    rotation: quaternion (w, x, y, z)
    log_scale: log of per-axis extent (3,)
    opacity_logit: pre-sigmoid opacity scalar
    sh_coeffs: ((degree+1)^2, 3) spherical-harmonics RGB coefficients
    """

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(4)
        self.log_scale = np.asarray(self.log_scale, dtype=float).reshape(3)
        self.opacity_logit = float(self.opacity_logit)
        self.sh_coeffs = np.asarray(self.sh_coeffs, dtype=float)
        if self.sh_coeffs.ndim != 2 or self.sh_coeffs.shape[1] != 3:
            raise ShapeError(f"sh_coeffs must be (K, 3), got {self.sh_coeffs.shape}")


class GaussianSet:
    """Struct-of-arrays collection of Gaussians sharing one SH degree."""

    __slots__ = ("positions", "rotations", "log_scales", "opacity_logits", "sh_coeffs")

    def __init__(self, positions, rotations, log_scales, opacity_logits, sh_coeffs):
        # always copy: attribute arrays are mutated in place by the optimizer
        self.positions = np.array(positions, dtype=float).reshape(-1, 3)
        n = len(self.positions)
        self.rotations = np.array(rotations, dtype=float).reshape(n, 4)
        self.log_scales = np.array(log_scales, dtype=float).reshape(n, 3)
        self.opacity_logits = np.array(opacity_logits, dtype=float).reshape(n)
        sh = np.array(sh_coeffs, dtype=float)
        if sh.ndim == 3:
            self.sh_coeffs = sh.reshape(n, sh.shape[1], 3)
        else:
            self.sh_coeffs = sh.reshape(n, -1, 3)

    @classmethod
    def empty(cls, sh_degree: int = 1) -> "GaussianSet":
        k = (sh_degree + 1) ** 2
        return cls(
            np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
            np.zeros((0,)), np.zeros((0, k, 3)),
        )

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianSet":
        gs = list(gaussians)
        if not gs:
            return cls.empty()
        return cls(
            np.stack([g.position for g in gs]),
            np.stack([g.rotation for g in gs]),
            np.stack([g.log_scale for g in gs]),
            np.array([g.opacity_logit for g in gs]),
            np.stack([g.sh_coeffs for g in gs]),
        )

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh_coeffs.shape[1]))) - 1

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(
            self.positions[i], self.rotations[i], self.log_scales[i],
            self.opacity_logits[i], self.sh_coeffs[i],
        )

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            self.positions.copy(), self.rotations.copy(), self.log_scales.copy(),
            self.opacity_logits.copy(), self.sh_coeffs.copy(),
        )

    def select(self, mask_or_indices) -> "GaussianSet":
        return GaussianSet(
            self.positions[mask_or_indices], self.rotations[mask_or_indices],
            self.log_scales[mask_or_indices], self.opacity_logits[mask_or_indices],
            self.sh_coeffs[mask_or_indices],
        )

    @staticmethod
    def concat(a: "GaussianSet", b: "GaussianSet") -> "GaussianSet":
        if len(a) == 0:
            return b.copy()
        if len(b) == 0:
            return a.copy()
        if a.sh_coeffs.shape[1] != b.sh_coeffs.shape[1]:
            raise ShapeError("cannot concatenate sets with different SH degrees")
        return GaussianSet(
            np.concatenate([a.positions, b.positions]),
            np.concatenate([a.rotations, b.rotations]),
            np.concatenate([a.log_scales, b.log_scales]),
            np.concatenate([a.opacity_logits, b.opacity_logits]),
            np.concatenate([a.sh_coeffs, b.sh_coeffs]),
        )

    def astype32(self):
        """float32 views of every attribute, in snapshot order."""
        return (
            self.positions.astype(np.float32), self.rotations.astype(np.float32),
            self.log_scales.astype(np.float32), self.opacity_logits.astype(np.float32),
            self.sh_coeffs.astype(np.float32),
        )


@dataclass
class GaussianGrads:
    """Per-Gaussian parameter gradients produced by the backward pass."""

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray
    # Screen-space densification signals (filled by the rasterizer backward)
    screen_grad_norm: np.ndarray = None
    visible: np.ndarray = None

    @classmethod
    def zeros(cls, n: int, k: int) -> "GaussianGrads":
        return cls(
            np.zeros((n, 3)), np.zeros((n, 4)), np.zeros((n, 3)),
            np.zeros(n), np.zeros((n, k, 3)),
            np.zeros(n), np.zeros(n, dtype=bool),
        )

    def add_(self, other: "GaussianGrads"):
        self.positions += other.positions
        self.rotations += other.rotations
        self.log_scales += other.log_scales
        self.opacity_logits += other.opacity_logits
        self.sh_coeffs += other.sh_coeffs
        return self
