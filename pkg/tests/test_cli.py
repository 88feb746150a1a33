import os
import subprocess
import sys

import numpy as np
import pytest

from dgsiac.cli import ConfigError, RunConfig, load_config, main

FAST_2D = ["--ordinates", "cl:4,2"]


def _read_rows(path):
    return np.loadtxt(path, comments="#")


def test_kernel_info_prints_coefficients(capsys):
    assert main(["kernel-info", "--k", "1"]) == 0
    out = capsys.readouterr().out
    assert "-1/12" in out and "7/6" in out


def test_solve_zero_source_gives_zero_field(tmp_path):
    code = main(["solve", "--problem", "steady-2d", "--cells", "4", "--source", "zero",
                 *FAST_2D, "-o", str(tmp_path)])
    assert code == 0
    text = (tmp_path / "density.txt").read_text()
    assert "problem = steady-2d" in text
    data = _read_rows(tmp_path / "density.txt")
    assert data.shape[1] == 3 and len(data) == 16 * 4
    assert np.all(data[:, 2] == 0.0)


def test_config_errors_exit_1(tmp_path, capsys):
    assert main(["solve", "--problem", "steady-2d", "--bdf-order", "3"]) == 1
    assert "bdf_order" in capsys.readouterr().err
    assert main(["bogus"]) == 1
    assert main(["solve", "--degree", "7"]) == 1
    assert main([]) == 1
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\nwidth = 3\n")
    assert main(["solve", "--config", str(cfg)]) == 1
    assert "width" in capsys.readouterr().err


def test_nonconvergence_exit_2(tmp_path):
    code = main(["solve", "--problem", "gaussian-2d", "--cells", "4", *FAST_2D, "--sigma", "100",
                 "--no-dsa", "--max-iter", "3", "-o", str(tmp_path)])
    assert code == 2


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nproblem = steady-1d\ncells = 8,16\ndegree = 2\nfilter = no\n")
    c = load_config(str(cfg), {"degree": 1})
    assert c.cells == (8, 16) and c.degree == 1 and c.filter is False
    assert c.ordinates == "gl:8"


@pytest.mark.parametrize(
    "kw, field",
    [
        (dict(problem="steady-3d"), "problem"),
        (dict(ordinates="gl:8"), "ordinates"),
        (dict(problem="steady-1d", ordinates="cl:8,4"), "ordinates"),
        (dict(problem="transient-2d", bdf_order=4), "bdf_order"),
        (dict(problem="transient-2d", dt="soon"), "dt"),
        (dict(sigma=3.0), "sigma"),
        (dict(tol=-1.0), "tol"),
        (dict(cells=(0,)), "cells"),
    ],
)
def test_validation_names_the_field(kw, field):
    with pytest.raises(ConfigError, match=field):
        RunConfig(**kw).validate()


def test_transient_defaults():
    c = RunConfig(problem="transient-2d").validate()
    assert c.bdf_order == 3 and c.dt == "0.5h"


def test_study_writes_deterministic_csv(tmp_path):
    args = ["study", "--problem", "steady-2d", "--cells", "4,8", *FAST_2D, "--no-timings"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([*args, "-o", str(a)]) == 0
    assert main([*args, "-o", str(b)]) == 0
    ta = (a / "study.csv").read_text().splitlines()
    tb = (b / "study.csv").read_text().splitlines()
    assert [l for l in ta if not l.startswith("# output")] == [l for l in tb if not l.startswith("# output")]
    assert any(l.startswith("h,cells,metric") for l in ta)


def test_filter_round_trip(tmp_path):
    assert main(["solve", "--problem", "steady-1d", "--cells", "16", "-o", str(tmp_path)]) == 0
    out = tmp_path / "refiltered.txt"
    assert main(["filter", str(tmp_path / "density.txt"), "-o", str(out)]) == 0
    a = _read_rows(tmp_path / "density_filtered.txt")
    b = _read_rows(out)
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_filter_missing_file_is_config_error(tmp_path):
    assert main(["filter", str(tmp_path / "nope.txt")]) == 1


def test_console_entry_point_runs(tmp_path):
    env = dict(os.environ, DGSIAC_THREADS="1")
    res = subprocess.run([sys.executable, "-m", "dgsiac.cli", "kernel-info", "--k", "2"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0
    assert "437/320" in res.stdout
    env["DGSIAC_THREADS"] = "many"
    res = subprocess.run([sys.executable, "-m", "dgsiac.cli", "kernel-info"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 1
