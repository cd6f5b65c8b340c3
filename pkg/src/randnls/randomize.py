"""Wiener randomization: unit-cube frequency decomposition with random coefficients.

A field phi is split into pieces whose spectra live on unit cubes centered at
the integer lattice, each piece is multiplied by an independent mean-zero
complex coefficient, and the pieces are summed back up.  The cube window is a
tensor raised-cosine bump whose integer translates form an exact partition of
unity, so forcing every coefficient to 1 reproduces phi.

Coefficient streams are counter-based: every coefficient is a pure hash of
(seed, draw index, absolute cube id), so regeneration is bit-exact regardless
of cube enumeration order or worker count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import Field, Grid, forward_transform, inverse_transform, l2_norm

__all__ = [
    "UnitCubeWindow",
    "CoefficientLaw",
    "RandomDraw",
    "TailFit",
    "TailReport",
    "occupied_cubes",
    "cube_projection",
    "window_matrix",
    "randomization_weights",
    "sample_coefficients",
    "wiener_randomize",
    "fit_log_survival",
    "sample_tail",
]

# skip cubes holding less than this fraction of the field's L2 mass
NEGLIGIBLE_CUBE_FRACTION = 1e-14

COEFFICIENT_LAWS = ("gaussian", "rademacher", "deterministic")


@dataclass(frozen=True)
class UnitCubeWindow:
    """Tensor product of the 1-d raised-cosine bump cos^2(pi x / 2) on [-1, 1].

    The profile satisfies psi(x) + psi(x - 1) = 1 on [0, 1], hence the integer
    translates sum to 1 identically: an exact partition of unity with compact
    support and no Schwartz tails to truncate.
    """

    @staticmethod
    def profile(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < 1.0
        out[inside] = np.cos(0.5 * math.pi * x[inside]) ** 2
        return out

    def axis_profiles(self, grid: Grid, centers: np.ndarray) -> np.ndarray:
        """Matrix psi_1(xi_k - c) over (centers, lattice axis)."""
        return self.profile(grid.xi_axis[np.newaxis, :] - centers[:, np.newaxis])

    def symbol(self, grid: Grid, center: tuple[int, ...] | np.ndarray) -> np.ndarray:
        """Full cube window psi(xi - n) on the grid lattice."""
        center = np.asarray(center, dtype=float)
        if center.shape != (grid.dim,):
            raise ValueError(f"cube center must have {grid.dim} components")
        out = np.ones(grid.shape)
        for d in range(grid.dim):
            axis = self.profile(grid.xi_axis - center[d])
            shape = [1] * grid.dim
            shape[d] = grid.points_per_axis
            out = out * axis.reshape(shape)
        return out


@dataclass(frozen=True)
class CoefficientLaw:
    """Per-cube coefficient distribution.

    gaussian: complex normal, Re/Im iid N(0, variance/2).
    rademacher: (+-1 +- i) * sqrt(variance/2), four values equally likely.
    deterministic: the constant sqrt(variance) (degenerate; used for
    reconstruction checks and step-tail controls, not sub-Gaussian studies).
    """

    kind: str = "gaussian"
    variance: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in COEFFICIENT_LAWS:
            raise ValueError(f"unknown coefficient law {self.kind!r}; choose from {COEFFICIENT_LAWS}")
        if self.variance <= 0:
            raise ValueError("coefficient variance must be positive")


@dataclass(frozen=True)
class RandomDraw:
    """One realization of the coefficient family, keyed by (seed, index)."""

    seed: int
    index: int = 0


# SplitMix64 finalizer constants
_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_SALT = _U64(0x243F6A8885A308D3)


def _mix64(x: np.ndarray) -> np.ndarray:
    # modular 64-bit arithmetic: wraparound is the point
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
        return x ^ (x >> _U64(31))


def _uniforms(seed: int, draw_index: int, cube_ids: np.ndarray, lane: int) -> np.ndarray:
    """Deterministic uniforms in (0, 1], one per cube id."""
    with np.errstate(over="ignore"):
        h = _mix64(np.asarray(_U64(seed & 0xFFFFFFFFFFFFFFFF) ^ _SALT))
        h = _mix64(h + _GOLDEN * _U64(draw_index % (1 << 32) + 1))
        bits = _mix64(h + _GOLDEN * (cube_ids.astype(np.uint64) + _U64(1)) + _SALT * _U64(lane))
    return ((bits >> _U64(11)).astype(np.float64) + 1.0) * 2.0**-53


def sample_coefficients(law: CoefficientLaw, seed: int, draw_index: int, cube_ids: np.ndarray) -> np.ndarray:
    """Complex coefficients g_n for the given cubes; E g_n = 0, E |g_n|^2 = variance."""
    cube_ids = np.asarray(cube_ids, dtype=np.uint64)
    scale = math.sqrt(law.variance)
    if law.kind == "deterministic":
        return np.full(cube_ids.shape, scale, dtype=np.complex128)
    u1 = _uniforms(seed, draw_index, cube_ids, lane=0)
    u2 = _uniforms(seed, draw_index, cube_ids, lane=1)
    if law.kind == "gaussian":
        radius = np.sqrt(-np.log(u1))
        return scale * radius * np.exp(2j * math.pi * u2)
    # rademacher: signs from two independent uniforms
    re = np.where(u1 > 0.5, 1.0, -1.0)
    im = np.where(u2 > 0.5, 1.0, -1.0)
    return scale * (re + 1j * im) / math.sqrt(2.0)


def _candidate_halfwidth(grid: Grid) -> int:
    # cubes centered beyond nyquist + 1 cannot touch the lattice
    return int(math.floor(grid.nyquist + 1.0))


def _axis_masses(window: UnitCubeWindow, grid: Grid, power: np.ndarray) -> np.ndarray:
    """Per-cube spectral mass sum_k psi(xi_k - n)^2 * power_k over the center box."""
    half = _candidate_halfwidth(grid)
    centers = np.arange(-half, half + 1, dtype=float)
    profile_sq = window.axis_profiles(grid, centers) ** 2
    out = power
    for _ in range(grid.dim):
        # contract the leading lattice axis against the center axis, cycling axes
        out = np.tensordot(profile_sq, out, axes=([1], [0]))
        out = np.moveaxis(out, 0, -1)
    return out


def occupied_cubes(phi: Field, window: UnitCubeWindow = UnitCubeWindow()) -> tuple[np.ndarray, np.ndarray]:
    """Centers (m, d) and absolute ids of cubes carrying non-negligible mass.

    Centers are returned in lexicographic order.  The absolute id of a cube is
    its linear index in the grid's full candidate box, so it does not depend
    on which cubes happen to be occupied.
    """
    grid = phi.grid
    spectrum_power = np.abs(forward_transform(phi)) ** 2
    masses = grid.spectral_weight * _axis_masses(window, grid, spectrum_power)
    total_sq = grid.cell_volume * float(np.sum(np.abs(phi.values) ** 2))
    cutoff = (NEGLIGIBLE_CUBE_FRACTION**2) * total_sq
    occupied = np.argwhere(masses > cutoff)
    half = _candidate_halfwidth(grid)
    centers = occupied - half
    width = 2 * half + 1
    ids = np.zeros(len(centers), dtype=np.uint64)
    for d in range(grid.dim):
        ids = ids * _U64(width) + occupied[:, d].astype(np.uint64)
    return centers.astype(np.int64), ids


def cube_projection(phi: Field, center: tuple[int, ...] | np.ndarray, window: UnitCubeWindow = UnitCubeWindow()) -> Field:
    """Frequency-cube piece eta(D - n) phi; zero if the cube misses the lattice."""
    return inverse_transform(phi.grid, forward_transform(phi) * window.symbol(phi.grid, center))


def window_matrix(grid: Grid, centers: np.ndarray, window: UnitCubeWindow = UnitCubeWindow()) -> np.ndarray:
    """Stack of flattened cube windows, shape (num_cubes, num_lattice_points).

    Dense layout: intended for the vectorized Monte Carlo paths at d <= 2;
    for d = 3 prefer :func:`randomization_weights`, which never materializes
    the per-cube windows.
    """
    centers = np.asarray(centers)
    if centers.ndim != 2 or centers.shape[1] != grid.dim:
        raise ValueError("centers must have shape (m, dim)")
    axis_values = [window.axis_profiles(grid, centers[:, d].astype(float)) for d in range(grid.dim)]
    out = axis_values[0]
    for d in range(1, grid.dim):
        out = out[:, :, np.newaxis] * axis_values[d][:, np.newaxis, :]
        out = out.reshape(len(centers), -1)
    return out


def randomization_weights(
    grid: Grid,
    centers: np.ndarray,
    coeffs: np.ndarray,
    window: UnitCubeWindow = UnitCubeWindow(),
) -> np.ndarray:
    """The lattice symbol sum_n g_n psi(xi - n), via separable contractions.

    Coefficients are scattered into the full candidate box and contracted one
    axis at a time against the 1-d profile, so the cost stays linear in the
    lattice size.
    """
    half = _candidate_halfwidth(grid)
    width = 2 * half + 1
    box = np.zeros((width,) * grid.dim, dtype=np.complex128)
    box[tuple((np.asarray(centers) + half).T)] = coeffs
    profile = window.axis_profiles(grid, np.arange(-half, half + 1, dtype=float))
    out = box
    for _ in range(grid.dim):
        # contract the leading center axis against the lattice, cycling axes
        out = np.tensordot(out, profile, axes=([0], [0]))
    return out


def wiener_randomize(
    phi: Field,
    window: UnitCubeWindow,
    law: CoefficientLaw,
    draw: RandomDraw,
) -> Field:
    """The randomized field sum_n g_n(omega) eta(D - n) phi."""
    centers, ids = occupied_cubes(phi, window)
    if len(centers) == 0:
        return Field.zero(phi.grid)
    coeffs = sample_coefficients(law, draw.seed, draw.index, ids)
    weights = randomization_weights(phi.grid, centers, coeffs, window)
    spectrum = forward_transform(phi) * weights
    return inverse_transform(phi.grid, spectrum)


@dataclass(frozen=True)
class TailFit:
    """Least-squares line for log survival against R^2, lifted to an envelope.

    The slope b and max_residual come from the least-squares fit over the fit
    range (survival between 10/M and 1/2): max_residual is the largest
    absolute log deviation from that line.  The reported intercept a is the
    least-squares intercept raised by the largest signed residual, so the
    envelope exp(a - b R^2) lies on or above every empirical point of the fit
    range; a_ls keeps the unlifted value.
    """

    a: float
    b: float
    fitted: bool
    max_residual: float
    n_points: int
    a_ls: float = math.nan
    reason: str = ""


@dataclass(frozen=True)
class TailReport:
    """Empirical survival table for a norm of randomized data."""

    thresholds: np.ndarray
    counts: np.ndarray
    m_draws: int
    norm_label: str
    fit: TailFit
    samples: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def survival(self) -> np.ndarray:
        return self.counts / float(self.m_draws)

    @property
    def fit_mask(self) -> np.ndarray:
        sv = self.survival
        return (sv >= 10.0 / self.m_draws) & (sv <= 0.5)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["R", "count_exceed", "M", "survival", "fit_a", "fit_b"])
            for r, c, s in zip(self.thresholds, self.counts, self.survival):
                writer.writerow([repr(float(r)), int(c), self.m_draws, repr(float(s)), repr(self.fit.a), repr(self.fit.b)])


def fit_log_survival(thresholds: np.ndarray, counts: np.ndarray, m_draws: int) -> TailFit:
    """Fit log P(R) ~ a - b R^2 over the usable survival range [10/M, 1/2]."""
    survival = counts / float(m_draws)
    mask = (survival >= 10.0 / m_draws) & (survival <= 0.5)
    if int(mask.sum()) < 3:
        return TailFit(math.nan, math.nan, False, math.nan, int(mask.sum()), reason="fewer than 3 rows in fit range")
    x = np.asarray(thresholds, dtype=float)[mask] ** 2
    y = np.log(survival[mask])
    if np.ptp(x) <= 1e-12 * max(1.0, float(np.max(x))) or np.ptp(y) <= 1e-12:
        return TailFit(math.nan, math.nan, False, math.nan, int(mask.sum()), reason="degenerate survival data")
    slope, intercept = np.polyfit(x, y, 1)
    b = -float(slope)
    residuals = y - (intercept + slope * x)
    max_residual = float(np.max(np.abs(residuals)))
    a = float(intercept) + float(np.max(residuals))
    return TailFit(a, b, True, max_residual, int(mask.sum()), a_ls=float(intercept))


def _auto_thresholds(samples: np.ndarray, m_draws: int, count: int = 12) -> np.ndarray:
    """Threshold grid placed at survival levels inside the fit range."""
    levels = np.geomspace(0.5, max(20.0 / m_draws, 1e-3), count)
    return np.quantile(samples, 1.0 - levels)


def sample_tail(
    phi: Field,
    s: float,
    m_draws: int,
    thresholds: np.ndarray | None = None,
    window: UnitCubeWindow = UnitCubeWindow(),
    law: CoefficientLaw = CoefficientLaw(),
    seed: int = 0,
    batch_size: int = 4096,
) -> TailReport:
    """Monte Carlo survival function of ||phi^omega||_{H^s} with its tail fit."""
    if m_draws < 256:
        raise ValueError(f"tail sampling needs at least 256 draws, got {m_draws}")
    if l2_norm(phi) == 0.0:
        raise ValueError("tail of the zero field is degenerate")
    grid = phi.grid
    centers, ids = occupied_cubes(phi, window)
    spectrum = forward_transform(phi).reshape(-1)
    weight_sq = grid.spectral_weight * (1.0 + grid.xi_squared.reshape(-1)) ** s * np.abs(spectrum) ** 2

    samples = np.empty(m_draws)
    if len(centers) * grid.num_points <= (1 << 23):
        windows = window_matrix(grid, centers, window)
        for start in range(0, m_draws, batch_size):
            stop = min(start + batch_size, m_draws)
            coeffs = np.stack(
                [sample_coefficients(law, seed, idx, ids) for idx in range(start, stop)]
            )
            mixed = coeffs @ windows
            samples[start:stop] = np.sqrt(np.abs(mixed) ** 2 @ weight_sq)
    else:
        for idx in range(m_draws):
            coeffs = sample_coefficients(law, seed, idx, ids)
            mixed = randomization_weights(grid, centers, coeffs, window).reshape(-1)
            samples[idx] = math.sqrt(float(np.abs(mixed) ** 2 @ weight_sq))

    if thresholds is None:
        thresholds = _auto_thresholds(samples, m_draws)
    thresholds = np.asarray(thresholds, dtype=float)
    ordered = np.sort(samples)
    counts = m_draws - np.searchsorted(ordered, thresholds, side="right")
    fit = fit_log_survival(thresholds, counts, m_draws)
    return TailReport(thresholds, counts, m_draws, f"H^{s}", fit, samples)
