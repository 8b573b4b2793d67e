import json
import subprocess
import sys

import pytest

from qbandit.cli import EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, main, validation_checks
from qbandit.config import RunConfig

FAST = ["--set", "run.T=2000", "--trials", "2", "--set", "run.grid_points=100"]


class TestRun:
    def test_writes_outputs(self, tmp_path, capsys):
        assert main(["run", "--out", str(tmp_path), *FAST]) == EXIT_OK
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["qgpucb.csv", "qgpucb.png", "qgpucb_meta.json", "qgpucb_stages.csv"]
        assert "mean cumulative regret" in capsys.readouterr().out

    def test_override_reaches_metadata(self, tmp_path):
        main(["run", "--out", str(tmp_path), *FAST, "--set", "qmc.c1=3.5"])
        meta = json.loads((tmp_path / "qgpucb_meta.json").read_text())
        assert meta["c1"] == 3.5
        assert meta["config"]["qmc.c1"] == 3.5

    def test_seed_changes_values_not_schema(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", "--out", str(a), *FAST, "--seed", "1"])
        main(["run", "--out", str(b), *FAST, "--seed", "2"])
        ta, tb = (d / "qgpucb.csv" for d in (a, b))
        la, lb = ta.read_text().splitlines(), tb.read_text().splitlines()
        assert la[0] == lb[0]
        assert len(la) == len(lb)
        assert la != lb

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("algo = gpucb\nrun.T = 300\nrun.n_trials = 1\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
        assert (tmp_path / "o" / "gpucb.csv").is_file()


class TestErrors:
    def test_missing_config(self, tmp_path, capsys):
        missing = tmp_path / "absent.cfg"
        assert main(["run", "--config", str(missing)]) == EXIT_CONFIG
        assert str(missing) in capsys.readouterr().err

    def test_unknown_key(self, capsys):
        assert main(["run", "--set", "run.horizon=5"]) == EXIT_CONFIG
        assert "run.horizon" in capsys.readouterr().err

    def test_bad_bench_list(self, tmp_path):
        assert main(["qae-bench", "--out", str(tmp_path), "--eps", "a,b"]) == EXIT_CONFIG

    def test_runtime_failure(self, tmp_path, capsys):
        code = main(["run", "--out", str(tmp_path), *FAST, "--set", "env.kind=table",
                     "--set", "env.table_path=/nonexistent.csv"])
        assert code == 2
        assert "nonexistent.csv" in capsys.readouterr().err


class TestCompare:
    def test_file_count(self, tmp_path):
        assert main(["compare", "--out", str(tmp_path), *FAST, "--algos", "qgpucb,gpucb"]) == EXIT_OK
        files = sorted(p.name for p in tmp_path.iterdir())
        assert len(files) == 7
        assert "compare.png" in files


class TestValidate:
    def test_default_setup_passes(self, capsys):
        assert main(["validate", *FAST]) == EXIT_OK
        out = capsys.readouterr().out
        assert "[FAIL]" not in out
        assert "det-doubling" in out

    def test_failed_check_gives_exit_3(self, monkeypatch):
        import qbandit.cli as cli

        monkeypatch.setattr(cli, "validation_checks", lambda cfg: [("forced", False, "x")])
        assert main(["validate", *FAST]) == EXIT_VALIDATION

    def test_linear_setup(self):
        cfg = RunConfig.build({"algo": "qlinucb", "env.kind": "linear", "env.dim": 2, "env.grid_size": 5,
                               "run.T": 2000, "run.n_trials": 2})
        assert all(passed for _, passed, _ in validation_checks(cfg))


class TestQaeBench:
    def test_small_bench(self, tmp_path, capsys):
        code = main(["qae-bench", "--out", str(tmp_path), "--eps", "0.05", "--p", "0.3", "--bench-seeds", "5"])
        assert code == EXIT_OK
        lines = (tmp_path / "qae_bench.csv").read_text().splitlines()
        assert lines[0] == "epsilon,p,mean_queries,success_rate"
        assert len(lines) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qbandit", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "validate" in proc.stdout
