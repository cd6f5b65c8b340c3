"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line per
criterion.  Desk scale: d=1 n=256, d=2 n=64^2, d=3 n=32^3.
"""

import math
import time

import numpy as np
import pytest

from conftest import brute_force_v2
from randnls.experiments import (
    ExperimentConfig,
    gaussian_profile,
    run_continuation_study,
    run_tail_study,
    study_csv_bytes,
)
from randnls.lp import dyadic_ladder, project_dyadic
from randnls.norms import Trajectory, v2_norm, ys_norm
from randnls.randomize import (
    CoefficientLaw,
    RandomDraw,
    UnitCubeWindow,
    cube_projection,
    occupied_cubes,
    sample_tail,
    wiener_randomize,
)
from randnls.solver import (
    EvolutionConfig,
    duhamel_map,
    free_evolution,
    local_existence_probe,
    picard_solve,
    split_step_solve,
)
from randnls.spectral import Field, Grid, l2_norm, random_field, sobolev_norm

WINDOW = UnitCubeWindow()
GAUSSIAN = CoefficientLaw("gaussian")


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def grid():
    return Grid(1, 256)


def test_partition_of_unity(grid):
    worst = 0.0
    for g in (grid, Grid(2, 64, 4.0 * math.pi)):
        half = int(math.floor(g.nyquist + 1.0))
        total = np.zeros(g.shape)
        centers = range(-half, half + 1)
        if g.dim == 1:
            for c in centers:
                total += WINDOW.symbol(g, (c,))
        else:
            for cx in centers:
                for cy in centers:
                    total += WINDOW.symbol(g, (cx, cy))
        worst = max(worst, float(np.max(np.abs(total - 1.0))))
    report("partition-of-unity", worst <= 1e-12, f"max deviation {worst:.2e}")


def test_randomization_reconstruction(grid):
    rng = np.random.default_rng(101)
    ones = CoefficientLaw("deterministic")
    worst = 0.0
    for _ in range(20):
        phi = random_field(grid, rng)
        back = wiener_randomize(phi, WINDOW, ones, RandomDraw(0))
        worst = max(worst, l2_norm(Field(grid, back.values - phi.values)) / l2_norm(phi))
    report("randomization-reconstruction", worst <= 1e-10, f"worst rel error {worst:.2e}")


def test_second_moment_identity(grid):
    s = 0.75
    phi = gaussian_profile(grid)
    centers, _ = occupied_cubes(phi)
    direct = sum(sobolev_norm(cube_projection(phi, c), s) ** 2 for c in centers)
    m_draws = 4096
    samples = sample_tail(phi, s, m_draws, seed=2024).samples ** 2
    stderr = samples.std(ddof=1) / math.sqrt(m_draws)
    gap = abs(samples.mean() - direct)
    report("second-moment-identity", gap <= 3.0 * stderr, f"gap {gap:.3e} vs 3*SE {3 * stderr:.3e}")


def test_tail_shape_subgaussian(grid):
    start = time.time()
    phi = gaussian_profile(grid)
    tail = sample_tail(phi, 0.75, 16384, seed=99)
    elapsed = time.time() - start
    ok = tail.fit.fitted and tail.fit.b > 0 and tail.fit.max_residual <= 0.5 and elapsed <= 300.0
    report(
        "tail-shape-subgaussian",
        ok,
        f"b {tail.fit.b:.3f}, max residual {tail.fit.max_residual:.3f}, {elapsed:.1f}s",
    )


def test_lp_reconstruction_and_annuli(grid):
    rng = np.random.default_rng(55)
    worst_recon = 0.0
    worst_cross = 0.0
    for _ in range(20):
        f = random_field(grid, rng)
        total = np.zeros(grid.shape, dtype=complex)
        for scale in dyadic_ladder(grid):
            total += project_dyadic(f, scale).values
        worst_recon = max(worst_recon, l2_norm(Field(grid, total - f.values)) / l2_norm(f))
        for low, high in ((1, 4), (2, 8), (4, 16)):
            cross = project_dyadic(project_dyadic(f, high), low)
            worst_cross = max(worst_cross, l2_norm(cross) / l2_norm(f))
    ok = worst_recon <= 1e-10 and worst_cross <= 1e-12
    report("lp-reconstruction-annuli", ok, f"recon {worst_recon:.2e}, cross {worst_cross:.2e}")


def test_v2_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(2, 13))
        states = rng.standard_normal((m, 4)) + 1j * rng.standard_normal((m, 4))
        weight = float(rng.uniform(0.5, 2.0))
        worst = max(worst, abs(v2_norm(states, weight) - brute_force_v2(states, weight)))
    report("v2-dynamic-programming-oracle", worst <= 1e-12, f"worst gap {worst:.2e}")


def test_ys_flat_on_free_flow(grid):
    rng = np.random.default_rng(13)
    times = np.linspace(0.0, 1.0, 33)
    worst = 0.0
    for _ in range(20):
        phi = random_field(grid, rng)
        z = free_evolution(phi, times)
        worst = max(worst, ys_norm(z, 0.75) / sobolev_norm(phi, 0.75))
    report("ys-flat-on-free-flow", worst <= 1e-10, f"worst ratio {worst:.2e}")


def test_bilinear_scaling():
    from randnls.experiments import run_bilinear_study

    cfg = ExperimentConfig(
        kind="bilinear", dimension=2, points=64, box_length=4.0 * math.pi, draws=32, seed=5, n1=2
    )
    result = run_bilinear_study(cfg)
    slope = result.verdicts["slope"]
    swept = sorted({row[2] for row in result.rows})
    ok = slope <= 0.1 and swept[-1] == dyadic_ladder(cfg.grid())[-1]
    report("bilinear-scaling", ok, f"slope {slope:.4f} over N2 in {swept}")


def test_propagator_scheme_order(grid):
    # plane wave: the scheme is exact there (error at rounding level)
    amp, index = 1.5, 6
    k = grid.xi_axis[index]
    wave = Field(grid, amp * np.exp(1j * k * grid.x_axis))
    cfg = EvolutionConfig(sign=1, power=5, horizon=0.5, dt=1e-3)
    run = split_step_solve(wave, cfg)
    t_end = run.trajectory.times[-1]
    exact = amp * np.exp(1j * (k * grid.x_axis - k**2 * t_end - amp**4 * t_end))
    wave_err = float(np.max(np.abs(run.trajectory.values[-1] - exact)))

    # order-2 slope against the closed-form focusing standing wave
    fine = Grid(1, 512, 16.0 * math.pi)
    x = fine.x_axis - fine.box_length / 2.0
    profile = 3.0**0.25 / np.sqrt(np.cosh(2.0 * x))
    soliton = Field(fine, profile.astype(complex))
    steps = [4e-3, 2e-3, 1e-3]
    errors = []
    mass_worst = 0.0
    for dt in steps:
        scfg = EvolutionConfig(sign=-1, power=5, horizon=0.5, dt=dt, snapshot_stride=125)
        srun = split_step_solve(soliton, scfg)
        mass_worst = max(mass_worst, srun.mass_drift)
        ref = np.exp(0.5j) * soliton.values
        errors.append(
            math.sqrt(fine.cell_volume * float(np.sum(np.abs(srun.trajectory.values[-1] - ref) ** 2)))
        )
    slope = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])

    # energy drift order 2 on well-resolved random data
    rng = np.random.default_rng(17)
    data = Field(grid, 1.2 * random_field(grid, rng, decay_scale=grid.nyquist / 6.0).values)
    drifts = []
    for dt in (2e-3, 1e-3):
        dcfg = EvolutionConfig(sign=1, power=5, horizon=0.5, dt=dt, snapshot_stride=25)
        drun = split_step_solve(data, dcfg)
        mass_worst = max(mass_worst, drun.mass_drift)
        drifts.append(drun.energy_drift)
    energy_ratio = drifts[0] / drifts[1]

    ok = wave_err <= 1e-9 and 1.7 <= slope <= 2.3 and mass_worst <= 1e-10 and 3.4 <= energy_ratio <= 4.6
    report(
        "propagator-scheme-order",
        ok,
        f"plane-wave err {wave_err:.1e}, slope {slope:.3f}, mass drift {mass_worst:.1e}, energy ratio {energy_ratio:.2f}",
    )


def test_picard_vs_split_step(grid):
    phi = gaussian_profile(grid)
    sample = wiener_randomize(phi, WINDOW, GAUSSIAN, RandomDraw(5))
    data = Field(grid, 1.5 * sample.values / l2_norm(sample))
    cfg = EvolutionConfig(sign=1, power=5, horizon=0.1, dt=1e-3, residual_tol=1e-8, max_iters=30)
    picard = picard_solve(data, cfg)
    reference = split_step_solve(data, cfg)
    diff = picard.trajectory.values - reference.trajectory.values
    sup_l2 = float(np.max(np.sqrt(grid.cell_volume * np.sum(np.abs(diff.reshape(len(diff), -1)) ** 2, axis=1))))
    allowed = 10.0 * max(cfg.dt**2, cfg.residual_tol)
    ok = picard.converged and sup_l2 <= allowed
    report("picard-vs-split-step", ok, f"sup L2 gap {sup_l2:.2e} vs allowed {allowed:.0e}")


def test_contraction_scaling(grid):
    phi = gaussian_profile(grid)
    sample = wiener_randomize(phi, WINDOW, GAUSSIAN, RandomDraw(11))
    sample = Field(grid, sample.values / l2_norm(sample))
    cfg = EvolutionConfig(sign=1, power=5, horizon=0.2, dt=2e-3)
    times = np.linspace(0.0, cfg.horizon, cfg.num_steps + 1)

    def contraction(amplitude: float) -> float:
        data = Field(grid, amplitude * sample.values)
        z = free_evolution(data, times)
        zero = Trajectory(grid, times, np.zeros_like(z.values))
        v1 = duhamel_map(zero, z, cfg)
        v2 = duhamel_map(v1, z, cfg)
        sup = lambda values: float(
            np.max(np.sqrt(grid.cell_volume * np.sum(np.abs(values.reshape(len(times), -1)) ** 2, axis=1)))
        )
        return sup(v2.values - v1.values) / sup(v1.values)

    ratio = contraction(1.0) / contraction(0.5)
    ok = 16.0 * 0.8 <= ratio <= 16.0 * 1.2
    report("contraction-quartic-scaling", ok, f"factor ratio {ratio:.2f} vs 16 +- 20%")


def test_existence_time_trend(grid):
    phi = gaussian_profile(grid)
    cfg = EvolutionConfig(sign=1, power=5, horizon=1.0, dt=0.02, max_iters=20, residual_tol=1e-6)
    amplitudes = [2.0, 2.5, 3.0, 3.5]
    rows = local_existence_probe(
        phi, WINDOW, GAUSSIAN, seeds=list(range(16)), amplitudes=amplitudes, cfg=cfg, horizon_cap=2.0
    )
    medians = [float(np.median([r["t_star"] for r in rows if r["amplitude"] == a])) for a in amplitudes]
    nonincreasing = all(medians[i + 1] <= medians[i] + 1e-12 for i in range(3))
    positive = [(a, m) for a, m in zip(amplitudes, medians) if m > 0]
    slope = float(np.polyfit(np.log([a for a, _ in positive]), np.log([m for _, m in positive]), 1)[0])
    ok = nonincreasing and slope < 0
    report("existence-time-trend", ok, f"medians {medians}, log-log slope {slope:.2f}")


def test_continuation_monitor():
    base = dict(
        kind="continuation", dimension=3, points=32, box_length=4.0 * math.pi,
        seeds=4, seed=11, horizon=1.0, dt=0.02, eps=0.3,
    )
    control = run_continuation_study(ExperimentConfig(**{**base, "amplitude": 0.0}))
    control_ok = (
        control.verdicts["horizon_reached_frequency"] == 1.0
        and {row[8] for row in control.rows} == {1}
    )
    active = run_continuation_study(ExperimentConfig(**{**base, "amplitude": 0.14}))
    ok = (
        control_ok
        and active.verdicts["all_intervals_within_eps"] is True
        and active.verdicts["halving_eps_never_shrinks_partition"] is True
    )
    sizes = active.verdicts["mean_partition_size"]
    report(
        "continuation-monitor",
        ok,
        f"control 1 interval, mean sizes eps {sizes['eps']:.2f} -> eps/2 {sizes['eps_half']:.2f}",
    )


def test_study_determinism():
    cfg = ExperimentConfig(kind="tail", samples=1024, seed=31, points=128)
    one = study_csv_bytes(run_tail_study(cfg))
    two = study_csv_bytes(run_tail_study(cfg))
    report("study-determinism", one == two, f"{len(one)} bytes compared")
