import json

import mpmath as mp
import numpy as np
import pytest

from hambvp.config import ConfigError, build_config
from hambvp.experiments import (EXPERIMENTS, bratu_fold_reference, equidistributed_times,
                                parallel_map, plain, registry_text, roughness, run_experiment,
                                uniform_partner)
from hambvp.output import read_csv, read_json


def test_registry_lists_every_experiment():
    assert set(EXPERIMENTS) == {"bratu", "henon-heiles-umbilic", "normal-form", "pitchfork",
                                "pitchfork-mesh", "pitchfork-4d", "scaling-study"}
    text = registry_text()
    for name in EXPERIMENTS:
        assert name in text


def test_bratu_reference_matches_independent_oracle():
    # maximise C(theta) = theta^2 / (2 cosh^2(theta/4)) with mpmath
    C = lambda th: th ** 2 / (2 * mp.cosh(th / 4) ** 2)
    th = mp.findroot(lambda t: mp.diff(C, t), 4.8)
    assert bratu_fold_reference() == pytest.approx(float(C(th)), abs=1e-12)


def test_equidistributed_times():
    times = np.linspace(0.0, 1.7, 51)
    traj = np.stack([np.sin(3 * times), times ** 3], axis=1)
    t = equidistributed_times(times, traj, 100, 1.7)
    assert t[0] == 0.0 and t[-1] == 1.7
    assert np.all(np.diff(t) > 0)
    assert len(t) <= 101
    lattice = 1.7 * 2 ** -10
    assert np.allclose(np.round(t[1:-1] / lattice) * lattice, t[1:-1])


def test_roughness_of_smooth_and_jagged_curves():
    x = np.linspace(0, 1, 101)
    assert roughness(x) == pytest.approx(0.0, abs=1e-15)
    assert roughness(x + 1e-3 * (-1) ** np.arange(101)) == pytest.approx(4e-3)


def test_uniform_partner():
    assert uniform_partner(225) == 100
    assert uniform_partner(904) == 400


def test_plain_converts_numpy():
    out = plain({"a": np.float64(1.5), 2: [np.int64(3), np.array([1.0, np.nan])]})
    assert json.dumps(out) == '{"a": 1.5, "2": [3, [1.0, null]]}'


def _square(v):
    return v * v


def test_parallel_map_keeps_order():
    assert parallel_map(_square, [3, 1, 2], jobs=2) == [9, 1, 4]


def test_bad_variants(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(build_config(experiment="pitchfork", variant="euler", out=str(tmp_path)))
    with pytest.raises(ConfigError):
        run_experiment(build_config(experiment="bratu", variant="x", out=str(tmp_path)))
    with pytest.raises(ConfigError):
        run_experiment(build_config(experiment="pitchfork", mesh="adaptive", out=str(tmp_path)))


def test_bratu_run_is_reproducible_across_job_counts(tmp_path):
    a = run_experiment(build_config(experiment="bratu", steps="20,30", out=str(tmp_path / "a")))
    b = run_experiment(build_config(experiment="bratu", steps="20,30", jobs=2,
                                    out=str(tmp_path / "b")))
    ca = (tmp_path / "a" / "bratu" / "bratu_diagram.csv").read_bytes()
    cb = (tmp_path / "b" / "bratu" / "bratu_diagram.csv").read_bytes()
    assert ca == cb
    assert a.summary["folds"] == b.summary["folds"]
    for f in a.files:
        if str(f).endswith(".csv"):
            assert read_csv(f).rows
        elif str(f).endswith(".json") and not str(f).endswith("report.json"):
            assert read_json(f).rows


def test_pitchfork_run(tmp_path):
    rep = run_experiment(build_config(experiment="pitchfork", variant="sv", steps="14",
                                      out=str(tmp_path), formats="csv,json,svg,gnuplot"))
    assert rep.summary["breaks"]["14"] > 0
    assert len(rep.summary["window_solutions"]["14"]) == 3
    names = sorted(f.name for f in rep.files)
    assert "pitchfork_sv_diagram.gp" in names and "report.json" in names
    from hambvp.output import count_svg_points
    diag = read_csv(tmp_path / "pitchfork-sv" / "pitchfork_sv_diagram.csv")
    assert count_svg_points(tmp_path / "pitchfork-sv" / "pitchfork_sv_diagram.svg") == len(diag.rows)
