"""Littlewood-Paley dyadic frequency projections.

The low-pass bump is radial: 1 for |xi| <= 1, 0 for |xi| >= 2, raised-cosine
in between.  The dyadic ladder is the finite set {1, 2, 4, ..., N_top} where
N_top is the first power of two at or above the per-axis Nyquist frequency;
windows at or above Nyquist are clamped to 1 so the telescoping sum of dyadic
blocks reconstructs the field exactly on the finite grid.
"""

from __future__ import annotations

import math

import numpy as np

from .spectral import Field, Grid, forward_transform, inverse_transform

__all__ = [
    "lp_profile",
    "dyadic_ladder",
    "leq_symbol",
    "dyadic_symbol",
    "project_leq",
    "project_dyadic",
]


def lp_profile(r: np.ndarray) -> np.ndarray:
    """Radial low-pass profile: 1 on [0,1], cos^2(pi(r-1)/2) on (1,2), 0 beyond."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    out[r <= 1.0] = 1.0
    band = (r > 1.0) & (r < 2.0)
    out[band] = np.cos(0.5 * math.pi * (r[band] - 1.0)) ** 2
    return out


def _check_scale(n_scale: int) -> int:
    n_scale = int(n_scale)
    if n_scale < 1 or (n_scale & (n_scale - 1)) != 0:
        raise ValueError(f"dyadic scale must be a power of two >= 1, got {n_scale}")
    return n_scale


def dyadic_ladder(grid: Grid) -> tuple[int, ...]:
    """All dyadic scales {1, ..., N_top} with N_top the first power of two >= Nyquist."""
    n_top = 1
    while n_top < grid.nyquist:
        n_top *= 2
    scales = []
    n = 1
    while n <= n_top:
        scales.append(n)
        n *= 2
    return tuple(scales)


def leq_symbol(grid: Grid, n_scale: int) -> np.ndarray:
    """Low-pass window psi(|xi|/N) on the lattice; identity once N >= Nyquist."""
    n_scale = _check_scale(n_scale)
    if n_scale >= grid.nyquist:
        return np.ones(grid.shape)
    return lp_profile(np.sqrt(grid.xi_squared) / n_scale)


def dyadic_symbol(grid: Grid, n_scale: int) -> np.ndarray:
    """Annulus window: P_1 = P_{<=1}, and P_N = P_{<=N} - P_{<=N/2} for N > 1."""
    n_scale = _check_scale(n_scale)
    if n_scale == 1:
        return leq_symbol(grid, 1)
    return leq_symbol(grid, n_scale) - leq_symbol(grid, n_scale // 2)


def project_leq(f: Field, n_scale: int) -> Field:
    return inverse_transform(f.grid, forward_transform(f) * leq_symbol(f.grid, n_scale))


def project_dyadic(f: Field, n_scale: int) -> Field:
    return inverse_transform(f.grid, forward_transform(f) * dyadic_symbol(f.grid, n_scale))
