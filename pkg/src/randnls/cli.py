"""Command-line entry point: config parsing, study dispatch, output writing.

Config files are INI-style key = value documents with one section per module
(see DEFAULTS below).  Unknown keys are rejected with the list of valid keys;
--set section.key=value overrides apply after the file.  Every run writes the
fully resolved config next to its outputs and writes manifest.json last, so a
manifest's presence implies the run completed and all referenced files exist.

Exit codes: 0 success, 1 config error, 2 numerical failure (nonconvergence or
blowup flagged).  RANDNLS_THREADS caps study worker counts.

Units convention: frequencies are lattice values xi = 2*pi*k/L; times are
absolute.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import experiments
from .experiments import ExperimentConfig, StudyResult, gaussian_profile, write_study_csv
from .randomize import CoefficientLaw, RandomDraw, UnitCubeWindow, wiener_randomize
from .solver import EvolutionConfig, picard_solve, save_trajectory, split_step_solve
from .norms import Trajectory
from .spectral import Field

__all__ = ["main", "parse_and_dispatch", "load_config", "ConfigError"]

MANIFEST_NAME = "manifest.json"
RESOLVED_NAME = "resolved.cfg"


class ConfigError(Exception):
    pass


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ValueError(raw)


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(part) for part in raw.split(",") if part.strip())


def _parse_thresholds(raw: str):
    if raw.strip().lower() == "auto":
        return None
    return _parse_float_list(raw)


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Option:
    parse: Callable[[str], object]
    default: object
    expected: str
    choices: tuple | None = None


DEFAULTS: dict[str, Option] = {
    "grid.dimension": Option(int, 1, "int"),
    "grid.points": Option(int, 256, "int (power of two >= 16)"),
    "grid.box_length": Option(float, 16.0 * math.pi, "float (>= 2*pi)"),
    "random.law": Option(str, "gaussian", "str", ("gaussian", "rademacher", "deterministic")),
    "random.variance": Option(float, 1.0, "float (> 0)"),
    "random.s": Option(float, 0.75, "float"),
    "run.seed": Option(int, 2024, "int"),
    "tail.samples": Option(int, 1024, "int (>= 256)"),
    "tail.thresholds": Option(_parse_thresholds, None, "comma-separated floats or 'auto'"),
    "tail.horizon": Option(float, 1.0, "float (> 0)"),
    "tail.time_samples": Option(int, 17, "int (>= 3)"),
    "bilinear.draws": Option(int, 32, "int (>= 1)"),
    "bilinear.n1": Option(int, 2, "int (dyadic)"),
    "bilinear.horizon": Option(float, 1.0, "float (> 0)"),
    "bilinear.time_samples": Option(int, 33, "int (>= 3)"),
    "bilinear.window_factor": Option(float, 0.125, "float (> 0)"),
    "solve.sign": Option(str, "defocusing", "str", ("defocusing", "focusing")),
    "solve.power": Option(int, 5, "odd int (>= 3)"),
    "solve.horizon": Option(float, 1.0, "float (> 0)"),
    "solve.dt": Option(float, 0.02, "float (> 0)"),
    "solve.stride": Option(int, 1, "int (>= 1)"),
    "solve.max_iters": Option(int, 20, "int (>= 1)"),
    "solve.residual_tol": Option(float, 1e-6, "float (> 0)"),
    "solve.amplitude": Option(float, 1.0, "float"),
    "existence.seeds": Option(int, 16, "int (>= 1)"),
    "existence.amplitudes": Option(_parse_float_list, (2.0, 2.5, 3.0, 3.5), "comma-separated floats"),
    "existence.horizon_cap": Option(float, 2.0, "float (> 0)"),
    "continuation.seeds": Option(int, 4, "int (>= 1)"),
    "continuation.amplitude": Option(float, 0.14, "float"),
    "continuation.eps": Option(float, 0.3, "float (> 0)"),
    "continuation.c": Option(float, 0.1, "float in (0, 0.125)"),
    "continuation.s": Option(float, 0.9375, "float in (0.875, 1)"),
}


def load_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """Resolve defaults, config file, then key=value overrides, with typing."""
    resolved = {key: opt.default for key, opt in DEFAULTS.items()}

    def apply(key: str, raw: str, origin: str) -> None:
        if key not in DEFAULTS:
            valid = ", ".join(sorted(DEFAULTS))
            raise ConfigError(f"unknown config key {key!r} ({origin}); valid keys: {valid}")
        opt = DEFAULTS[key]
        try:
            value = opt.parse(raw)
        except ValueError:
            raise ConfigError(f"key {key}: expected {opt.expected}, got {raw!r}")
        if opt.choices is not None and value not in opt.choices:
            raise ConfigError(f"key {key}: expected one of {opt.choices}, got {raw!r}")
        resolved[key] = value

    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"config file {path} is malformed: {exc}")
        for section in parser.sections():
            for name, raw in parser.items(section):
                apply(f"{section}.{name}", raw, f"from {path}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, raw = item.split("=", 1)
        apply(key.strip(), raw.strip(), "from --set")
    return resolved


def experiment_config(kind: str, cfg: dict, seed: int | None = None) -> ExperimentConfig:
    out = ExperimentConfig(
        kind=kind,
        dimension=cfg["grid.dimension"],
        points=cfg["grid.points"],
        box_length=cfg["grid.box_length"],
        law=cfg["random.law"],
        variance=cfg["random.variance"],
        s=cfg["random.s"],
        seed=cfg["run.seed"] if seed is None else seed,
        samples=cfg["tail.samples"],
        thresholds=cfg["tail.thresholds"],
        tail_horizon=cfg["tail.horizon"],
        tail_time_samples=cfg["tail.time_samples"],
        draws=cfg["bilinear.draws"],
        n1=cfg["bilinear.n1"],
        bilinear_horizon=cfg["bilinear.horizon"],
        bilinear_time_samples=cfg["bilinear.time_samples"],
        window_factor=cfg["bilinear.window_factor"],
        sign=1 if cfg["solve.sign"] == "defocusing" else -1,
        power=cfg["solve.power"],
        horizon=cfg["solve.horizon"],
        dt=cfg["solve.dt"],
        stride=cfg["solve.stride"],
        max_iters=cfg["solve.max_iters"],
        residual_tol=cfg["solve.residual_tol"],
        amplitude=cfg["continuation.amplitude"] if kind == "continuation" else cfg["solve.amplitude"],
        seeds=cfg["continuation.seeds"] if kind == "continuation" else cfg["existence.seeds"],
        amplitudes=cfg["existence.amplitudes"],
        horizon_cap=cfg["existence.horizon_cap"],
        eps=cfg["continuation.eps"],
        c=cfg["continuation.c"],
        continuation_s=cfg["continuation.s"],
    )
    try:
        out.validate()
        out.grid()
        out.coefficient_law()
    except ValueError as exc:
        raise ConfigError(str(exc))
    return out


def _write_resolved(cfg: dict, path: str) -> None:
    sections: dict[str, list[tuple[str, str]]] = {}
    for key in sorted(cfg):
        section, name = key.split(".", 1)
        sections.setdefault(section, []).append((name, _format_value(cfg[key])))
    with open(path, "w") as handle:
        for section, items in sections.items():
            handle.write(f"[{section}]\n")
            for name, value in items:
                handle.write(f"{name} = {value}\n")
            handle.write("\n")


def _prepare_outdir(outdir: str, force: bool) -> None:
    os.makedirs(outdir, exist_ok=True)
    manifest = os.path.join(outdir, MANIFEST_NAME)
    if os.path.exists(manifest) and not force:
        raise ConfigError(f"{manifest} exists; pass --force to overwrite")


def _write_manifest(outdir: str, payload: dict) -> None:
    path = os.path.join(outdir, MANIFEST_NAME)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=str)
        handle.write("\n")


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _run_study(kind: str, cfg: dict, outdir: str, force: bool) -> int:
    runner = {
        "tail": experiments.run_tail_study,
        "bilinear": experiments.run_bilinear_study,
        "existence": experiments.run_existence_study,
        "continuation": experiments.run_continuation_study,
    }[kind]
    exp_cfg = experiment_config(kind, cfg)
    _prepare_outdir(outdir, force)
    result: StudyResult = runner(exp_cfg)
    csv_name = f"{kind}.csv"
    write_study_csv(result, os.path.join(outdir, csv_name))
    _write_resolved(cfg, os.path.join(outdir, RESOLVED_NAME))
    _write_manifest(
        outdir,
        {
            "schema_version": experiments.SCHEMA_VERSION,
            "kind": kind,
            "config": {key: _jsonable(value) for key, value in cfg.items()},
            "studies": [{"kind": kind, "csv": csv_name}],
            "outputs": {"config_echo": RESOLVED_NAME},
            "fits": result.fits,
            "verdicts": result.verdicts,
        },
    )
    if result.failure is not None:
        print(f"numerical failure: {result.failure}", file=sys.stderr)
        return 2
    return 0


def _randomized_data(cfg: dict) -> Field:
    exp_cfg = experiment_config("randomize", cfg)
    phi = gaussian_profile(exp_cfg.grid())
    sample = wiener_randomize(phi, UnitCubeWindow(), exp_cfg.coefficient_law(), RandomDraw(exp_cfg.seed))
    return Field(phi.grid, exp_cfg.amplitude * sample.values)


def _cmd_randomize(cfg: dict, outdir: str, force: bool) -> int:
    data = _randomized_data(cfg)
    _prepare_outdir(outdir, force)
    name = "randomized.traj"
    save_trajectory(Trajectory(data.grid, np.array([0.0]), data.values[np.newaxis]), os.path.join(outdir, name))
    _write_resolved(cfg, os.path.join(outdir, RESOLVED_NAME))
    _write_manifest(
        outdir,
        {
            "schema_version": experiments.SCHEMA_VERSION,
            "kind": "randomize",
            "config": {key: _jsonable(value) for key, value in cfg.items()},
            "studies": [],
            "outputs": {"config_echo": RESOLVED_NAME, "trajectory": name},
            "verdicts": {},
        },
    )
    return 0


def _cmd_evolution(kind: str, cfg: dict, outdir: str, force: bool) -> int:
    data = _randomized_data(cfg)
    exp_cfg = experiment_config(kind, cfg)
    solve = split_step_solve if kind == "evolve" else picard_solve
    _prepare_outdir(outdir, force)
    report = solve(data, exp_cfg.evolution())
    name = "trajectory.traj"
    save_trajectory(report.trajectory, os.path.join(outdir, name))
    _write_resolved(cfg, os.path.join(outdir, RESOLVED_NAME))
    verdicts = {
        "converged": report.converged,
        "blowup": report.blowup,
        "blowup_time": report.blowup_time,
        "mass_drift": report.mass_drift,
        "energy_drift": report.energy_drift,
        "iterations": report.iterations,
        "final_residual": report.final_residual,
        "residual_history": list(report.residual_history),
    }
    _write_manifest(
        outdir,
        {
            "schema_version": experiments.SCHEMA_VERSION,
            "kind": kind,
            "config": {key: _jsonable(value) for key, value in cfg.items()},
            "studies": [],
            "outputs": {"config_echo": RESOLVED_NAME, "trajectory": name},
            "verdicts": verdicts,
        },
    )
    if report.blowup or not report.converged:
        print(f"numerical failure: blowup={report.blowup} converged={report.converged}", file=sys.stderr)
        return 2
    return 0


def _selftest_checks() -> list[tuple[str, Callable[[], None]]]:
    import itertools

    from . import lp, norms, randomize, solver, spectral

    rng = np.random.default_rng(0)
    grid = spectral.Grid(1, 64)
    f = spectral.random_field(grid, rng)

    def transform_roundtrip() -> None:
        back = spectral.inverse_transform(grid, spectral.forward_transform(f))
        assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))
        spec = spectral.forward_transform(f)
        lhs = math.sqrt(grid.spectral_weight * float(np.sum(np.abs(spec) ** 2)))
        assert abs(lhs - spectral.l2_norm(f)) <= 1e-10 * spectral.l2_norm(f)

    def propagator_group() -> None:
        for t in (0.3, -1.7):
            moved = spectral.linear_propagator(f, t)
            assert abs(spectral.l2_norm(moved) - spectral.l2_norm(f)) <= 1e-12 * spectral.l2_norm(f)
        twice = spectral.linear_propagator(spectral.linear_propagator(f, 1.1), 0.4)
        once = spectral.linear_propagator(f, 1.5)
        assert np.max(np.abs(twice.values - once.values)) <= 1e-11 * np.max(np.abs(once.values))

    def multiplier_commutation() -> None:
        a = spectral.apply_multiplier(spectral.linear_propagator(f, 0.7), spectral.bessel_weight(grid, 0.6))
        b = spectral.linear_propagator(spectral.apply_multiplier(f, spectral.bessel_weight(grid, 0.6)), 0.7)
        assert np.max(np.abs(a.values - b.values)) <= 1e-13 * np.max(np.abs(a.values))

    def partition_of_unity() -> None:
        window = randomize.UnitCubeWindow()
        half = int(math.floor(grid.nyquist + 1.0))
        total = np.zeros(grid.shape)
        for center in range(-half, half + 1):
            total += window.symbol(grid, (center,))
        assert np.max(np.abs(total - 1.0)) <= 1e-12

    def reconstruction_and_determinism() -> None:
        window = randomize.UnitCubeWindow()
        ones = randomize.CoefficientLaw("deterministic")
        back = randomize.wiener_randomize(f, window, ones, randomize.RandomDraw(3))
        assert spectral.l2_norm(spectral.Field(grid, back.values - f.values)) <= 1e-10 * spectral.l2_norm(f)
        law = randomize.CoefficientLaw("gaussian")
        one = randomize.wiener_randomize(f, window, law, randomize.RandomDraw(9, 2))
        two = randomize.wiener_randomize(f, window, law, randomize.RandomDraw(9, 2))
        assert np.array_equal(one.values, two.values)

    def lp_reconstruction() -> None:
        total = np.zeros(grid.shape, dtype=complex)
        for scale in lp.dyadic_ladder(grid):
            total += lp.project_dyadic(f, scale).values
        assert np.max(np.abs(total - f.values)) <= 1e-10 * np.max(np.abs(f.values))
        low = lp.project_dyadic(f, 1)
        again = lp.project_dyadic(low, 4)
        assert spectral.l2_norm(again) <= 1e-12 * spectral.l2_norm(f)

    def v2_against_bruteforce() -> None:
        seq = rng.standard_normal((9, 3)) + 1j * rng.standard_normal((9, 3))
        dist = lambda i, j: math.sqrt(float(np.sum(np.abs(seq[i] - seq[j]) ** 2)))
        best = 0.0
        for size in range(2, 10):
            for sub in itertools.combinations(range(9), size):
                best = max(best, sum(dist(sub[k - 1], sub[k]) ** 2 for k in range(1, size)))
        assert abs(norms.v2_norm(seq) - math.sqrt(best)) <= 1e-12

    def ys_flat_on_free_flow() -> None:
        times = np.linspace(0.0, 1.0, 17)
        z = solver.free_evolution(f, times)
        assert norms.ys_norm(z, 0.75) <= 1e-10 * spectral.sobolev_norm(f, 0.75)

    def split_step_plane_wave() -> None:
        wave_k = grid.xi_axis[3]
        wave = spectral.Field(grid, 1.5 * np.exp(1j * wave_k * grid.x_axis))
        cfg = solver.EvolutionConfig(sign=1, power=5, horizon=0.2, dt=1e-3)
        report = solver.split_step_solve(wave, cfg)
        assert report.mass_drift <= 1e-10
        t_end = report.trajectory.times[-1]
        exact = 1.5 * np.exp(1j * (wave_k * grid.x_axis - wave_k**2 * t_end - 1.5**4 * t_end))
        assert np.max(np.abs(report.trajectory.values[-1] - exact)) <= 1e-9

    def duhamel_basics() -> None:
        times = np.linspace(0.0, 0.2, 9)
        cfg = solver.EvolutionConfig()
        zero = norms.Trajectory(grid, times, np.zeros((9,) + grid.shape, dtype=complex))
        out = solver.duhamel_map(zero, zero, cfg)
        assert np.all(out.values == 0)
        z = solver.free_evolution(f, times)
        v = norms.Trajectory(grid, times, 0.05 * solver.free_evolution(spectral.random_field(grid, rng), times).values)
        one = solver.duhamel_map(v, z, cfg)
        both = solver.duhamel_map(
            norms.Trajectory(grid, times, 2.0 * v.values), norms.Trajectory(grid, times, 2.0 * z.values), cfg
        )
        assert np.max(np.abs(one.values[0])) == 0.0
        assert np.max(np.abs(both.values - 32.0 * one.values)) <= 1e-8 * max(np.max(np.abs(both.values)), 1e-300)

    return [
        ("transform-roundtrip-parseval", transform_roundtrip),
        ("propagator-unitarity-group-law", propagator_group),
        ("multiplier-commutation", multiplier_commutation),
        ("partition-of-unity", partition_of_unity),
        ("randomization-reconstruction-determinism", reconstruction_and_determinism),
        ("lp-reconstruction-disjoint-annuli", lp_reconstruction),
        ("v2-dynamic-programming-oracle", v2_against_bruteforce),
        ("ys-flat-on-free-flow", ys_flat_on_free_flow),
        ("split-step-plane-wave-mass", split_step_plane_wave),
        ("duhamel-zero-homogeneity", duhamel_basics),
    ]


def _cmd_selftest() -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    if failures:
        print(f"{failures} selftest check(s) failed", file=sys.stderr)
        return 2
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randnls", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("randomize", "evolve", "picard", "tail", "bilinear", "existence", "continuation"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file; defaults apply when omitted")
        p.add_argument("--out", required=True, help="output directory (created if absent)")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override, repeatable")
        p.add_argument("--force", action="store_true", help="allow overwriting an existing run directory")
    sub.add_parser("selftest")
    return parser


def parse_and_dispatch(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "selftest":
        return _cmd_selftest()
    try:
        cfg = load_config(args.config, list(args.set))
        if args.seed is not None:
            cfg["run.seed"] = args.seed
        if args.command in ("tail", "bilinear", "existence", "continuation"):
            return _run_study(args.command, cfg, args.out, args.force)
        if args.command == "randomize":
            return _cmd_randomize(cfg, args.out, args.force)
        return _cmd_evolution(args.command, cfg, args.out, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
