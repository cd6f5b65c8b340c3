"""Periodic-box spectral core: grids, complex fields, and Fourier-multiplier algebra.

The continuum domain R^d is approximated by the torus [0, L)^d.  The forward
transform carries the quadrature weight (L/n)^d so spectral sums approximate
continuum integrals, and the L^2 pairing in frequency space carries the dual
weight 1/L^d (one lattice cell of volume (2*pi/L)^d per mode, divided by the
(2*pi)^d of Plancherel).  With these conventions physical and spectral norms
agree and stay consistent under grid refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi

# memory budget: n**d complex snapshots stay comfortably below ~1 GiB
MAX_GRID_POINTS = 1 << 24

__all__ = [
    "Grid",
    "Field",
    "Multiplier",
    "forward_transform",
    "inverse_transform",
    "apply_multiplier",
    "bessel_weight",
    "propagator_multiplier",
    "linear_propagator",
    "l2_norm",
    "lebesgue_norm",
    "sobolev_norm",
    "scaling_critical_index",
    "is_admissible",
    "random_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic box [0, L)^d with frequency lattice xi_k = 2*pi*k/L.

    The frequency spacing 2*pi/L must not exceed 1 so that unit cubes in
    frequency space contain several lattice points (L >= 2*pi).
    """

    dim: int
    points_per_axis: int
    box_length: float = 16.0 * math.pi

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        n = self.points_per_axis
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"points_per_axis must be a power of two >= 16, got {n}")
        if not (self.box_length >= TWO_PI):
            raise ValueError(
                f"box_length must be >= 2*pi so the frequency spacing is <= 1, got {self.box_length}"
            )
        if n**self.dim > MAX_GRID_POINTS:
            raise ValueError(
                f"{n}^{self.dim} points exceed the grid memory budget of {MAX_GRID_POINTS}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def num_points(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def freq_spacing(self) -> float:
        return TWO_PI / self.box_length

    @property
    def nyquist(self) -> float:
        """Largest per-axis |xi| on the lattice (the unpaired -n/2 row)."""
        return math.pi * self.points_per_axis / self.box_length

    @property
    def cell_volume(self) -> float:
        return (self.box_length / self.points_per_axis) ** self.dim

    @property
    def spectral_weight(self) -> float:
        """Weight of one frequency-lattice cell in the Plancherel pairing."""
        return self.box_length ** (-self.dim)

    @cached_property
    def x_axis(self) -> np.ndarray:
        n = self.points_per_axis
        return np.arange(n) * (self.box_length / n)

    @cached_property
    def xi_axis(self) -> np.ndarray:
        """1-d frequency lattice in FFT ordering (0, ..., +max, -max, ..., -1)."""
        n = self.points_per_axis
        return np.fft.fftfreq(n, d=1.0 / n) * self.freq_spacing

    @cached_property
    def xi_grids(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.xi_axis] * self.dim), indexing="ij"))

    @cached_property
    def xi_squared(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for axis in self.xi_grids:
            out += axis**2
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on rows holding the unpaired Nyquist frequency of any axis."""
        mask = np.zeros(self.shape, dtype=bool)
        half = self.points_per_axis // 2
        for d in range(self.dim):
            index: list = [slice(None)] * self.dim
            index[d] = half
            mask[tuple(index)] = True
        return mask


@dataclass(frozen=True)
class Field:
    """Complex spatial state on a Grid, immutable once constructed."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_spectrum(cls, grid: Grid, coefficients: np.ndarray) -> "Field":
        return inverse_transform(grid, coefficients)

    def l2_norm(self) -> float:
        return l2_norm(self)


@dataclass(frozen=True)
class Multiplier:
    """Diagonal Fourier operator: symbol evaluated on the frequency lattice.

    Multipliers marked fractional zero the Nyquist rows before acting, which
    avoids asymmetric aliasing from the unpaired -n/2 frequency in |xi|^s
    weights.
    """

    grid: Grid
    symbol: np.ndarray
    fractional: bool = False

    def __post_init__(self) -> None:
        sym = np.asarray(self.symbol, dtype=np.complex128)
        if sym.shape != self.grid.shape:
            raise ValueError("symbol shape does not match grid")
        if not np.all(np.isfinite(sym.view(np.float64))):
            raise ValueError("multiplier symbol must be finite on the lattice")
        sym = sym.copy()
        sym.flags.writeable = False
        object.__setattr__(self, "symbol", sym)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray], fractional: bool = False) -> "Multiplier":
        """Build from a symbol m(xi_1, ..., xi_d) evaluated on the lattice."""
        return cls(grid, np.asarray(fn(*grid.xi_grids), dtype=np.complex128), fractional)


def forward_transform(f: Field) -> np.ndarray:
    """Discrete Fourier coefficients f_hat(xi_k) = (L/n)^d sum f(x) e^{-i xi_k x}."""
    if not np.all(np.isfinite(f.values.view(np.float64))):
        raise ValueError("field contains non-finite values")
    return np.fft.fftn(f.values) * f.grid.cell_volume


def inverse_transform(grid: Grid, coefficients: np.ndarray) -> Field:
    """Inverse of :func:`forward_transform`."""
    if coefficients.shape != grid.shape:
        raise ValueError("coefficient shape does not match grid")
    return Field(grid, np.fft.ifftn(np.asarray(coefficients, dtype=np.complex128)) / grid.cell_volume)


def apply_multiplier(f: Field, m: Multiplier) -> Field:
    if f.grid != m.grid:
        raise ValueError("field and multiplier live on different grids")
    spectrum = forward_transform(f)
    if m.fractional:
        spectrum[f.grid.nyquist_mask] = 0.0
    return inverse_transform(f.grid, spectrum * m.symbol)


def bessel_weight(grid: Grid, s: float) -> Multiplier:
    """The smoothing/roughening weight <grad>^s with symbol (1+|xi|^2)^{s/2}."""
    return Multiplier(grid, (1.0 + grid.xi_squared) ** (s / 2.0), fractional=(s != 0.0))


def propagator_multiplier(grid: Grid, t: float) -> Multiplier:
    """Free Schrodinger flow over time t: symbol e^{-i t |xi|^2}."""
    return Multiplier(grid, np.exp(-1j * t * grid.xi_squared))


def linear_propagator(f: Field, t: float) -> Field:
    """Apply the free flow S(t) = e^{i t Laplacian}; exactly unitary on the lattice."""
    if t == 0.0:
        return f
    spectrum = forward_transform(f) * np.exp(-1j * t * f.grid.xi_squared)
    return inverse_transform(f.grid, spectrum)


def l2_norm(f: Field) -> float:
    return math.sqrt(f.grid.cell_volume * float(np.sum(np.abs(f.values) ** 2)))


def lebesgue_norm(f: Field, r: float) -> float:
    """Spatial L^r norm via the grid Riemann sum; r = inf uses the sample max."""
    if math.isinf(r):
        return float(np.max(np.abs(f.values)))
    if r < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1 or inf, got {r}")
    return float(f.grid.cell_volume * np.sum(np.abs(f.values) ** r)) ** (1.0 / r)


def sobolev_norm(f: Field, s: float) -> float:
    """H^s norm: l^2 frequency sum weighted by (1+|xi|^2)^s, Plancherel-scaled."""
    spectrum = forward_transform(f)
    weighted = (1.0 + f.grid.xi_squared) ** s * np.abs(spectrum) ** 2
    return math.sqrt(f.grid.spectral_weight * float(np.sum(weighted)))


def scaling_critical_index(d: int, p: float) -> float:
    """Sobolev index s_c = d/2 - 2/(p-1) left invariant by the NLS dilation."""
    if p <= 1:
        raise ValueError(f"nonlinearity power must exceed 1, got {p}")
    return d / 2.0 - 2.0 / (p - 1.0)


def is_admissible(q: float, r: float, d: int) -> bool:
    """Schrodinger admissibility: 2 <= q, r <= inf, 2/q + d/r = d/2, not (2, inf, 2)."""
    if q < 2 or r < 2:
        return False
    if q == 2 and math.isinf(r) and d == 2:
        return False
    lhs = (0.0 if math.isinf(q) else 2.0 / q) + (0.0 if math.isinf(r) else d / r)
    return abs(lhs - d / 2.0) <= 1e-12


def random_field(grid: Grid, rng: np.random.Generator, decay_scale: float | None = None) -> Field:
    """Band-limited random test field with Gaussian spectral decay.

    The Nyquist rows are left empty so the field is well resolved on the grid
    (its content represents a smooth function of R^d, not lattice artifacts).
    """
    if decay_scale is None:
        decay_scale = grid.nyquist / 3.0
    shape = grid.shape
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coeffs *= np.exp(-grid.xi_squared / (2.0 * decay_scale**2))
    coeffs[grid.nyquist_mask] = 0.0
    return inverse_transform(grid, coeffs)
