import json
import subprocess
import sys

import pytest

from hambvp.cli import main
from hambvp.output import read_csv


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("stormer-verlet", "lobatto3a", "henon-heiles-umbilic", "exp-sine", "bratu"):
        assert name in out


@pytest.mark.parametrize("argv", [[], ["run"], ["run", "bogus"], ["frobnicate"],
                                  ["run", "normal-form", "e8"],
                                  ["run", "bratu", "--steps", "x"],
                                  ["run", "bratu", "--method", "euler"],
                                  ["run", "bratu", "--format", "pdf"],
                                  ["run", "bratu", "--config", "/nonexistent.cfg"]])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1


def test_numerical_failure_exits_two(tmp_path):
    # no Bratu solution exists beyond the fold
    argv = ["run", "bratu", "--steps", "20", "--param-range", "5:6", "--out", str(tmp_path)]
    assert main(argv) == 2


def test_run_writes_report(tmp_path, capsys):
    assert main(["run", "normal-form", "cusp", "--out", str(tmp_path), "--format", "csv,json"]) == 0
    report = json.loads((tmp_path / "normal-form-cusp" / "report.json").read_text())
    assert report["summary"]["counts"]["A3"] == 1
    for f in report["files"]:
        assert (tmp_path / "normal-form-cusp").joinpath(f.split("/")[-1]).stat().st_size > 0
    t = read_csv(tmp_path / "normal-form-cusp" / "normal_form_cusp.csv")
    assert t.columns == ("mu1", "mu2", "class", "x")


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "nf.cfg"
    cfg.write_text("experiment = normal-form\nvariant = cusp\nformats = csv\n")
    monkeypatch.setenv("HAMBVP_OUT", str(tmp_path / "env"))
    assert main(["run", "normal-form", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "normal-form-cusp" / "normal_form_cusp.csv").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hambvp.cli", "list"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0
    assert "pitchfork-mesh" in proc.stdout
