"""Time evolution for the quintic NLS: split-step reference solver and the
Duhamel fixed-point (Picard) iteration for the nonlinear remainder.

The full equation i u_t + Laplacian u = sign * |u|^{p-1} u is integrated by
Strang splitting (half nonlinear phase rotation, exact linear flow, half
nonlinear phase rotation); both sub-flows preserve mass exactly, so the mass
drift sits at rounding level while the energy drift is second order in dt.

The remainder v = u - S(t) phi solves v = Gamma v with
Gamma v(t) = sign * integral_0^t -i S(t-t') [|v+z|^{p-1}(v+z)](t') dt',
evaluated by interaction-picture trapezoid quadrature: each integrand sample
is pulled back by the (exact) free flow, accumulated, and pushed forward, so
the only scheme error is the time quadrature of the slowly varying pulled
back integrand.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .norms import Trajectory
from .randomize import CoefficientLaw, RandomDraw, UnitCubeWindow, wiener_randomize
from .spectral import Field, Grid, l2_norm

__all__ = [
    "EvolutionConfig",
    "SolveReport",
    "IntervalRecord",
    "ContinuationReport",
    "mass",
    "energy",
    "free_evolution",
    "split_step_solve",
    "duhamel_map",
    "picard_solve",
    "local_existence_probe",
    "continuation_monitor",
    "save_trajectory",
    "load_trajectory",
]

# spatial sup growing past this factor of the initial sup is treated as blowup
BLOWUP_FACTOR = 1e6

# mixed-norm pairs monitored on the linear part during continuation
CONTINUATION_PAIRS: tuple[tuple[float, float], ...] = ((10.0, 10.0), (7.5, 15.0 / 7.0), (30.0 / 7.0, 15.0))


@dataclass(frozen=True)
class EvolutionConfig:
    """Run parameters shared by the split-step solver and the Picard iteration."""

    sign: int = 1  # +1 defocusing, -1 focusing
    power: int = 5
    horizon: float = 1.0
    dt: float = 1e-2
    snapshot_stride: int = 1
    max_iters: int = 25
    residual_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 (defocusing) or -1 (focusing)")
        if self.power < 3 or self.power % 2 == 0:
            raise ValueError(f"nonlinearity power must be an odd integer >= 3, got {self.power}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < self.dt:
            raise ValueError("horizon must be at least one step")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        if self.residual_tol <= 0:
            raise ValueError("residual tolerance must be positive")

    @property
    def num_steps(self) -> int:
        return max(1, round(self.horizon / self.dt))


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one evolution run."""

    trajectory: Trajectory
    mass_drift: float
    energy_drift: float
    iterations: int
    final_residual: float
    converged: bool
    blowup: bool = False
    blowup_time: float | None = None
    residual_history: tuple[float, ...] = ()


def mass(u: Field) -> float:
    """Conserved mass (1/2) integral |u|^2."""
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * u.grid.cell_volume * float(np.sum(np.abs(u.values) ** 2))


def energy(u: Field, sign: int = 1, power: int = 5) -> float:
    """Conserved energy (1/2) integral |grad u|^2 + sign/(p+1) integral |u|^{p+1}."""
    with np.errstate(over="ignore", invalid="ignore"):
        spectrum = np.fft.fftn(u.values) * u.grid.cell_volume
        kinetic = 0.5 * u.grid.spectral_weight * float(np.sum(u.grid.xi_squared * np.abs(spectrum) ** 2))
        potential = u.grid.cell_volume * float(np.sum(np.abs(u.values) ** (power + 1))) / (power + 1)
        return kinetic + sign * potential


def free_evolution(phi: Field, times: Sequence[float]) -> Trajectory:
    """Sample the exact free flow S(t) phi at the given times."""
    grid = phi.grid
    times = np.asarray(times, dtype=float)
    spectrum = np.fft.fftn(phi.values) * grid.cell_volume
    phases = np.exp(-1j * times[(slice(None),) + (np.newaxis,) * grid.dim] * grid.xi_squared)
    axes = tuple(range(1, grid.dim + 1))
    values = np.fft.ifftn(phases * spectrum, axes=axes) / grid.cell_volume
    return Trajectory(grid, times, values)


def _relative_drift(series: np.ndarray) -> float:
    base = float(series[0])
    scale = max(abs(base), 1e-300)
    return float(np.max(np.abs(series - base))) / scale


def _drifts(traj: Trajectory, sign: int, power: int) -> tuple[float, float]:
    masses = np.array([mass(traj.state(i)) for i in range(traj.num_samples)])
    energies = np.array([energy(traj.state(i), sign, power) for i in range(traj.num_samples)])
    return _relative_drift(masses), _relative_drift(energies)


def split_step_solve(phi: Field, cfg: EvolutionConfig) -> SolveReport:
    """Strang split-step integration of the full equation.

    On a non-finite state or a spatial sup exceeding BLOWUP_FACTOR times the
    initial sup (a blowup proxy for focusing runs) the run stops early and the
    partial trajectory is returned with the blowup flag set.
    """
    grid = phi.grid
    steps = cfg.num_steps
    dt = cfg.horizon / steps
    linear_phase = np.exp(-1j * dt * grid.xi_squared)
    half = -0.5j * cfg.sign * dt
    u = np.array(phi.values, dtype=np.complex128)
    limit = BLOWUP_FACTOR * max(float(np.max(np.abs(u))), 1e-300)

    snap_times = [0.0]
    snapshots = [u.copy()]
    blowup = False
    blowup_time = None
    for step in range(1, steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            u *= np.exp(half * np.abs(u) ** (cfg.power - 1))
            u = np.fft.ifftn(np.fft.fftn(u) * linear_phase)
            u *= np.exp(half * np.abs(u) ** (cfg.power - 1))
        if not np.all(np.isfinite(u.view(np.float64))) or float(np.max(np.abs(u))) > limit:
            blowup = True
            blowup_time = step * dt
            break
        if step % cfg.snapshot_stride == 0 or step == steps:
            snap_times.append(step * dt)
            snapshots.append(u.copy())

    traj = Trajectory(grid, np.array(snap_times), np.stack(snapshots))
    mass_drift, energy_drift = _drifts(traj, cfg.sign, cfg.power)
    return SolveReport(
        trajectory=traj,
        mass_drift=mass_drift,
        energy_drift=energy_drift,
        iterations=0,
        final_residual=0.0,
        converged=not blowup,
        blowup=blowup,
        blowup_time=blowup_time,
    )


def _duhamel_values(
    w_values: np.ndarray,
    times: np.ndarray,
    grid: Grid,
    sign: int,
    power: int,
    pullback_phases: np.ndarray,
) -> np.ndarray:
    """Interaction-picture trapezoid evaluation of the Duhamel integral of |w|^{p-1} w."""
    axes = tuple(range(1, grid.dim + 1))
    with np.errstate(over="ignore", invalid="ignore"):
        forcing = np.abs(w_values) ** (power - 1) * w_values
        forcing_hat = np.fft.fftn(forcing, axes=axes)
        pulled = forcing_hat * pullback_phases
        increments = 0.5 * (pulled[:-1] + pulled[1:])
        dt_steps = np.diff(times).reshape((-1,) + (1,) * grid.dim)
        integral = np.zeros_like(pulled)
        np.cumsum(increments * dt_steps, axis=0, out=integral[1:])
        gamma_hat = (-1j * sign) * integral * np.conj(pullback_phases)
        return np.fft.ifftn(gamma_hat, axes=axes)


def _pullback_phases(grid: Grid, times: np.ndarray) -> np.ndarray:
    return np.exp(1j * times[(slice(None),) + (np.newaxis,) * grid.dim] * grid.xi_squared)


def duhamel_map(v: Trajectory, z: Trajectory, cfg: EvolutionConfig) -> Trajectory:
    """One application of the fixed-point map Gamma to the remainder trajectory."""
    if v.grid != z.grid:
        raise ValueError("remainder and linear part live on different grids")
    if v.num_samples != z.num_samples or not np.allclose(v.times, z.times, atol=1e-12):
        raise ValueError("remainder and linear part need common time samples")
    phases = _pullback_phases(v.grid, v.times)
    values = _duhamel_values(v.values + z.values, v.times, v.grid, cfg.sign, cfg.power, phases)
    return Trajectory(v.grid, v.times, values)


def picard_solve(phi_omega: Field, cfg: EvolutionConfig) -> SolveReport:
    """Iterate v_{k+1} = Gamma v_k from v_0 = 0 and return u = z + v.

    The residual is sup-in-time L^2 of the update, relative to the L^2 norm
    of the data; three consecutive residual increases flag divergence.
    """
    grid = phi_omega.grid
    steps = cfg.num_steps
    times = np.linspace(0.0, cfg.horizon, steps + 1)
    z = free_evolution(phi_omega, times)
    phases = _pullback_phases(grid, times)
    scale = max(l2_norm(phi_omega), 1e-300)
    sqrt_cell = math.sqrt(grid.cell_volume)

    v = np.zeros_like(z.values)
    history: list[float] = []
    converged = False
    diverged = False
    increases = 0
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        v_next = _duhamel_values(v + z.values, times, grid, cfg.sign, cfg.power, phases)
        if not np.all(np.isfinite(v_next.view(np.float64))):
            diverged = True
            break
        delta = v_next - v
        with np.errstate(over="ignore"):
            residual = sqrt_cell * float(
                np.max(np.sqrt(np.sum(np.abs(delta.reshape(len(times), -1)) ** 2, axis=1)))
            ) / scale
        if math.isinf(residual) or math.isnan(residual):
            diverged = True
            break
        history.append(residual)
        v = v_next
        if residual <= cfg.residual_tol:
            converged = True
            break
        if len(history) >= 2 and residual > history[-2]:
            increases += 1
            if increases >= 3:
                diverged = True
                break
        else:
            increases = 0

    traj = Trajectory(grid, times, z.values + v)
    mass_drift, energy_drift = _drifts(traj, cfg.sign, cfg.power)
    return SolveReport(
        trajectory=traj,
        mass_drift=mass_drift,
        energy_drift=energy_drift,
        iterations=iterations,
        final_residual=history[-1] if history else 0.0,
        converged=converged and not diverged,
        blowup=diverged,
        blowup_time=times[-1] if diverged else None,
        residual_history=tuple(history),
    )


def local_existence_probe(
    phi: Field,
    window: UnitCubeWindow,
    law: CoefficientLaw,
    seeds: Sequence[int],
    amplitudes: Sequence[float],
    cfg: EvolutionConfig,
    horizon_cap: float,
    run=None,
) -> list[dict]:
    """Largest Picard-convergent horizon per (amplitude, seed), by bisection.

    Horizons are quantized to multiples of cfg.dt; T* = horizon_cap means the
    iteration converged at the cap, T* = 0 means it failed already on one
    step.  `run` may replace picard_solve (used by tests).
    """
    solve = run or picard_solve
    cap_steps = max(1, round(horizon_cap / cfg.dt))

    def converges(data: Field, steps: int) -> bool:
        probe_cfg = replace(cfg, horizon=steps * cfg.dt)
        return solve(data, probe_cfg).converged

    rows: list[dict] = []
    for seed in seeds:
        sample = wiener_randomize(phi, window, law, RandomDraw(int(seed)))
        for amplitude in amplitudes:
            data = Field(phi.grid, amplitude * sample.values)
            if converges(data, cap_steps):
                rows.append(
                    {"amplitude": float(amplitude), "seed": int(seed), "t_star": cap_steps * cfg.dt, "converged_at_cap": True}
                )
                continue
            if not converges(data, 1):
                rows.append({"amplitude": float(amplitude), "seed": int(seed), "t_star": 0.0, "converged_at_cap": False})
                continue
            lo, hi = 1, cap_steps
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if converges(data, mid):
                    lo = mid
                else:
                    hi = mid
            rows.append({"amplitude": float(amplitude), "seed": int(seed), "t_star": lo * cfg.dt, "converged_at_cap": False})
    return rows


@dataclass(frozen=True)
class IntervalRecord:
    """One piece of the continuation partition with its monitored norms."""

    t_start: float
    t_end: float
    v_l10l10: float
    z_norms: dict
    v_sup_h: float


@dataclass(frozen=True)
class ContinuationReport:
    intervals: tuple[IntervalRecord, ...]
    eps: float
    horizon: float
    reached: bool
    verdict: str
    fail_time: float | None = None

    @property
    def partition_size(self) -> int:
        return len(self.intervals)

    @property
    def max_h_norm(self) -> float:
        return max((rec.v_sup_h for rec in self.intervals), default=0.0)


def continuation_monitor(
    report: SolveReport,
    eps: float,
    s: float = 0.9375,
    c: float = 0.1,
    horizon: float | None = None,
) -> ContinuationReport:
    """Greedy interval splitting of a d=3 run under the epsilon budgets.

    A new subinterval starts whenever extending the current piece by one more
    sample would push the running L^10 L^10 norm of the remainder v = u - z,
    or any monitored mixed norm of <grad>^s z, above eps.  Every emitted piece
    therefore satisfies its eps bounds by construction.  If a single sample
    step already violates a budget, or the underlying run failed, the verdict
    is "extension failed" at that time.
    """
    traj = report.trajectory
    grid = traj.grid
    if grid.dim != 3:
        raise ValueError("continuation monitoring is defined for d = 3 runs")
    if eps <= 0:
        raise ValueError("eps must be positive")
    times = traj.times
    if horizon is None:
        horizon = float(times[-1])

    z = free_evolution(traj.state(0), times)
    v_values = traj.values - z.values
    axes = tuple(range(1, grid.dim + 1))

    flat_v = np.abs(v_values.reshape(len(times), -1))
    g_v10 = (grid.cell_volume * np.sum(flat_v**10, axis=1)) ** 0.1

    z_hat = np.fft.fftn(z.values, axes=axes) * grid.cell_volume
    z_weighted = np.fft.ifftn(z_hat * (1.0 + grid.xi_squared) ** (s / 2.0), axes=axes) / grid.cell_volume
    flat_z = np.abs(z_weighted.reshape(len(times), -1))
    monitored: list[tuple[str, np.ndarray, float]] = [("v_l10l10", g_v10, 10.0)]
    for q, r in CONTINUATION_PAIRS:
        g = (grid.cell_volume * np.sum(flat_z**r, axis=1)) ** (1.0 / r)
        monitored.append((f"z_q{q:g}_r{r:g}", g, q))

    v_hat = np.fft.fftn(v_values, axes=axes) * grid.cell_volume
    h_weight = (1.0 + grid.xi_squared.reshape(-1)) ** (1.0 + c)
    h_norms = np.sqrt(grid.spectral_weight * (np.abs(v_hat.reshape(len(times), -1)) ** 2 @ h_weight))

    def emit(i0: int, i1: int, accumulators: np.ndarray) -> IntervalRecord:
        values = [acc ** (1.0 / q) for acc, (_, _, q) in zip(accumulators, monitored)]
        return IntervalRecord(
            t_start=float(times[i0]),
            t_end=float(times[i1]),
            v_l10l10=values[0],
            z_norms={name: val for (name, _, _), val in zip(monitored[1:], values[1:])},
            v_sup_h=float(np.max(h_norms[i0 : i1 + 1])),
        )

    intervals: list[IntervalRecord] = []
    acc = np.zeros(len(monitored))
    piece_start = 0
    fail_time: float | None = None
    for j in range(len(times) - 1):
        dt = float(times[j + 1] - times[j])
        step = np.array([0.5 * (g[j] ** q + g[j + 1] ** q) * dt for _, g, q in monitored])
        if np.all((acc + step) ** (1.0 / np.array([q for _, _, q in monitored])) <= eps):
            acc += step
            continue
        if j == piece_start:
            fail_time = float(times[j + 1])
            break
        intervals.append(emit(piece_start, j, acc))
        piece_start = j
        acc = step.copy()
        if np.any(acc ** (1.0 / np.array([q for _, _, q in monitored])) > eps):
            fail_time = float(times[j + 1])
            break
    else:
        intervals.append(emit(piece_start, len(times) - 1, acc))

    if not report.converged or report.blowup:
        fail_time = report.blowup_time if report.blowup_time is not None else float(times[-1])

    if fail_time is not None:
        return ContinuationReport(tuple(intervals), eps, horizon, False, f"extension failed at t={fail_time:g}", fail_time)
    tol = 1e-9 * max(1.0, abs(horizon))
    reached = float(times[-1]) >= horizon - tol
    verdict = "reached-horizon" if reached else "stopped-before-horizon"
    return ContinuationReport(tuple(intervals), eps, horizon, reached, verdict)


# trajectory container: '<qqdq' header (dim, points_per_axis, box_length,
# sample count) then per snapshot a '<d' timestamp followed by the C-order
# complex values as little-endian float64 pairs
_HEADER = struct.Struct("<qqdq")
_TIME = struct.Struct("<d")


def save_trajectory(traj: Trajectory, path: str) -> None:
    grid = traj.grid
    with open(path, "wb") as handle:
        handle.write(_HEADER.pack(grid.dim, grid.points_per_axis, grid.box_length, traj.num_samples))
        for k in range(traj.num_samples):
            handle.write(_TIME.pack(float(traj.times[k])))
            handle.write(np.ascontiguousarray(traj.values[k], dtype="<c16").tobytes())


def load_trajectory(path: str) -> Trajectory:
    with open(path, "rb") as handle:
        raw = handle.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"{path} is too short for a trajectory header")
        dim, n, box_length, count = _HEADER.unpack(raw)
        grid = Grid(int(dim), int(n), float(box_length))
        times = np.empty(count)
        values = np.empty((count,) + grid.shape, dtype=np.complex128)
        snapshot_bytes = grid.num_points * 16
        for k in range(count):
            times[k] = _TIME.unpack(handle.read(_TIME.size))[0]
            block = handle.read(snapshot_bytes)
            if len(block) != snapshot_bytes:
                raise ValueError(f"{path} ends mid-snapshot at index {k}")
            values[k] = np.frombuffer(block, dtype="<c16").reshape(grid.shape)
    return Trajectory(grid, times, values)
