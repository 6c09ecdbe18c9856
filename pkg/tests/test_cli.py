import json
import subprocess
import sys

import pytest

from tsfbench.cli import run_cli
from tsfbench.tuner import load_tune_report


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert run_cli(["generate", "--out", str(out), "--steps", "1200", "--transient", "50",
                    "--systems", "Lorenz,Hopfield"]) == 0
    return out


@pytest.fixture
def space_file(tmp_path):
    path = tmp_path / "space.cfg"
    path.write_text("lookbacks = 24, 48\nkernels = 1, 5\n")
    return path


class TestExitCodes:
    @pytest.mark.parametrize("cmd", [[], ["generate"], ["granger"], ["tune"], ["evaluate"], ["report"]])
    def test_help(self, cmd, capsys):
        assert run_cli(cmd + ["--help"]) == 0
        assert "usage:" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["tune", "--data", "x.csv"],
                                      ["granger", "--data", "x.csv", "--lag", "two"]])
    def test_usage_errors(self, argv):
        assert run_cli(argv) == 1

    def test_missing_file(self, tmp_path, capsys):
        assert run_cli(["granger", "--data", str(tmp_path / "nope.csv"), "--lag", "3"]) == 2
        assert "error" in capsys.readouterr().err

    def test_bad_space_file(self, bench, tmp_path):
        (tmp_path / "s.cfg").write_text("colour = red\n")
        assert run_cli(["tune", "--data", str(bench / "Lorenz.csv"), "--horizon", "12",
                        "--space", str(tmp_path / "s.cfg")]) == 2

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "tsfbench", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "generate" in res.stdout


class TestGenerate:
    def test_outputs(self, bench):
        manifest = json.loads((bench / "manifest.json").read_text())
        assert len(manifest["datasets"]) == 2
        assert (bench / "Lorenz.csv").exists() and (bench / "Hopfield.csv").exists()

    def test_deterministic(self, bench, tmp_path):
        assert run_cli(["generate", "--out", str(tmp_path), "--steps", "1200", "--transient", "50",
                        "--systems", "Lorenz,Hopfield"]) == 0
        for name in ("manifest.json", "Lorenz.csv", "Hopfield.csv"):
            assert (tmp_path / name).read_bytes() == (bench / name).read_bytes()

    def test_unknown_system(self, tmp_path):
        assert run_cli(["generate", "--out", str(tmp_path), "--systems", "Duffing"]) == 2


class TestGranger:
    def test_stdout_json(self, bench, capsys):
        assert run_cli(["granger", "--data", str(bench / "Lorenz.csv"), "--lag", "5",
                        "--sample-len", "300"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["avg_f"] > 0

    def test_file_outputs(self, bench, tmp_path):
        for fmt in ("json", "csv"):
            out = tmp_path / "sub" / f"g.{fmt}"
            assert run_cli(["granger", "--data", str(bench / "Lorenz.csv"), "--lag", "5",
                            "--sample-len", "300", "--format", fmt, "--out", str(out)]) == 0
            assert out.stat().st_size > 0


class TestTuneEvaluateReport:
    def test_flow(self, bench, space_file, tmp_path, capsys):
        reports = tmp_path / "reports"
        for name in ("Lorenz", "Hopfield"):
            for h in (12, 24):
                assert run_cli(["tune", "--data", str(bench / f"{name}.csv"), "--horizon", str(h),
                                "--budget", "3", "--space", str(space_file),
                                "--out", str(reports / f"{name}_{h}.json"),
                                "--model-out", str(tmp_path / f"{name}_{h}.model.json")]) == 0
        rep = load_tune_report(reports / "Lorenz_12.json")
        assert rep.dataset == "Lorenz" and rep.budget == 3
        capsys.readouterr()

        assert run_cli(["evaluate", "--data", str(bench / "Lorenz.csv"), "--model",
                        str(tmp_path / "Lorenz_12.model.json"), "--horizon", "12"]) == 0
        assert float(capsys.readouterr().out) == rep.test_mse

        assert run_cli(["evaluate", "--data", str(bench / "Lorenz.csv"), "--model",
                        str(tmp_path / "Lorenz_12.model.json"), "--horizon", "24"]) == 2

        assert run_cli(["report", "--in", str(reports), "--out", str(tmp_path / "s.json")]) == 0
        summary = json.loads((tmp_path / "s.json").read_text())
        assert set(summary) >= {"avg_mse", "ranks", "avg_rank", "wins", "lookback_hist", "matchup", "policies"}
        assert sum(sum(h.values()) for h in summary["lookback_hist"].values()) == 4

    def test_tune_stdout_and_determinism(self, bench, space_file, capsys):
        argv = ["tune", "--data", str(bench / "Hopfield.csv"), "--horizon", "12", "--budget", "3",
                "--space", str(space_file)]
        assert run_cli(argv) == 0
        first = capsys.readouterr().out
        assert run_cli(argv) == 0
        assert capsys.readouterr().out == first
        assert "fit_seconds" not in first

    def test_report_empty_dir(self, tmp_path):
        assert run_cli(["report", "--in", str(tmp_path), "--out", str(tmp_path / "s.json")]) == 2
