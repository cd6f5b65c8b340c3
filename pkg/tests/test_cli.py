import json
import math
import os

import pytest

from randnls.cli import ConfigError, load_config, parse_and_dispatch
from randnls.solver import load_trajectory


def run(argv):
    return parse_and_dispatch(argv)


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg["grid.dimension"] == 1
        assert cfg["grid.points"] == 256
        assert cfg["solve.sign"] == "defocusing"
        assert cfg["tail.thresholds"] is None

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        assert load_config(str(path)) == load_config(None)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/no/such/file.cfg")

    def test_unknown_key_lists_valid(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[grid]\nshape = round\n")
        with pytest.raises(ConfigError, match="grid.points"):
            load_config(str(path))

    def test_type_mismatch_reports_key_expected_got(self):
        with pytest.raises(ConfigError, match=r"tail.samples.*expected int.*'many'"):
            load_config(None, ["tail.samples=many"])

    def test_choice_validation(self):
        with pytest.raises(ConfigError, match="random.law"):
            load_config(None, ["random.law=cauchy"])

    def test_overrides_after_file(self, tmp_path):
        path = tmp_path / "base.cfg"
        path.write_text("[tail]\nsamples = 512\n")
        cfg = load_config(str(path), ["tail.samples=2048"])
        assert cfg["tail.samples"] == 2048

    def test_threshold_list(self):
        cfg = load_config(None, ["tail.thresholds=1.0,2.0,3.5"])
        assert cfg["tail.thresholds"] == (1.0, 2.0, 3.5)


class TestWindows:
    def test_theorem_window_accepts_and_rejects(self, tmp_path, capsys):
        # the d=3 existence window (0.5, 1): s = 0.7 accepted, s = 0.4 rejected
        out = tmp_path / "ok"
        code = run([
            "existence", "--out", str(out), "--set", "grid.dimension=3", "--set", "grid.points=16",
            "--set", "random.s=0.7", "--set", "existence.seeds=1", "--set", "existence.amplitudes=0.0",
            "--set", "existence.horizon_cap=0.1", "--set", "solve.dt=0.05",
        ])
        assert code == 0
        code = run(["existence", "--out", str(tmp_path / "bad"), "--set", "grid.dimension=3",
                    "--set", "grid.points=16", "--set", "random.s=0.4"])
        assert code == 1
        assert "(0.5, 1)" in capsys.readouterr().err


class TestDispatch:
    def test_selftest_passes(self, capsys):
        assert run(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_missing_config_exit_one(self, tmp_path, capsys):
        code = run(["tail", "--out", str(tmp_path / "x"), "--config", "/missing.cfg"])
        assert code == 1
        assert "/missing.cfg" in capsys.readouterr().err

    def test_tail_outputs_and_determinism(self, tmp_path):
        args = ["--set", "tail.samples=512", "--set", "grid.points=128"]
        assert run(["tail", "--out", str(tmp_path / "a"), "--seed", "5", *args]) == 0
        assert run(["tail", "--out", str(tmp_path / "b"), "--seed", "5", *args]) == 0
        a = (tmp_path / "a" / "tail.csv").read_bytes()
        b = (tmp_path / "b" / "tail.csv").read_bytes()
        assert a == b
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["kind"] == "tail"
        for entry in manifest["studies"]:
            assert (tmp_path / "a" / entry["csv"]).exists()

    def test_refuses_overwrite_without_force(self, tmp_path):
        args = ["tail", "--out", str(tmp_path / "a"), "--set", "tail.samples=256", "--set", "grid.points=128"]
        assert run(args) == 0
        assert run(args) == 1
        assert run(args + ["--force"]) == 0

    def test_config_echo_round_trips(self, tmp_path):
        args = ["--set", "tail.samples=512", "--set", "grid.points=128", "--seed", "9"]
        assert run(["tail", "--out", str(tmp_path / "a"), *args]) == 0
        echo = tmp_path / "a" / "resolved.cfg"
        assert run(["tail", "--out", str(tmp_path / "c"), "--config", str(echo), "--seed", "9"]) == 0
        assert (tmp_path / "a" / "tail.csv").read_bytes() == (tmp_path / "c" / "tail.csv").read_bytes()

    def test_randomize_writes_trajectory(self, tmp_path):
        out = tmp_path / "r"
        assert run(["randomize", "--out", str(out), "--set", "grid.points=64"]) == 0
        traj = load_trajectory(str(out / "randomized.traj"))
        assert traj.num_samples == 1
        assert traj.grid.points_per_axis == 64

    def test_evolve_and_picard(self, tmp_path):
        common = ["--set", "grid.points=64", "--set", "solve.horizon=0.1", "--set", "solve.dt=0.01",
                  "--set", "solve.amplitude=0.5"]
        out_e = tmp_path / "evolve"
        assert run(["evolve", "--out", str(out_e), *common]) == 0
        report = json.loads((out_e / "manifest.json").read_text())
        assert report["verdicts"]["blowup"] is False
        out_p = tmp_path / "picard"
        assert run(["picard", "--out", str(out_p), *common]) == 0
        report = json.loads((out_p / "manifest.json").read_text())
        assert report["verdicts"]["converged"] is True
        traj = load_trajectory(str(out_p / "trajectory.traj"))
        assert traj.times[-1] == pytest.approx(0.1)

    def test_picard_nonconvergence_exit_two(self, tmp_path):
        out = tmp_path / "diverge"
        code = run(["picard", "--out", str(out),
                    "--set", "grid.points=64", "--set", "solve.horizon=1.0",
                    "--set", "solve.dt=0.05", "--set", "solve.amplitude=40.0",
                    "--set", "solve.max_iters=10"])
        assert code == 2
        # manifest still written (last) so the failure is inspectable
        assert (out / "manifest.json").exists()

    def test_manifest_written_last(self, tmp_path):
        out = tmp_path / "a"
        assert run(["tail", "--out", str(out), "--set", "tail.samples=256", "--set", "grid.points=128"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        for entry in manifest["studies"]:
            assert (out / entry["csv"]).exists()
        assert (out / manifest["outputs"]["config_echo"]).exists()
