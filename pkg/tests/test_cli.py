import csv
import subprocess
import sys

import numpy as np
import pytest

from penreg.cli import main


def write_config(path, text):
    path.write_text(text)
    return str(path)


BASE_IF = """
[experiment]
kind = if_surface
seed = 3
n_draws = 5000

[model]
beta0 = 0.0

[functionals]
names = lasso
lambda = 0.1

[grid]
x0 = -10:10:11
y0 = -10:10:11
"""


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_if_surface_zero_functional_writes_zero_surface(tmp_path):
    cfg = write_config(tmp_path / "c.ini", BASE_IF)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 0
    header, body = read_csv(out / "if_surface_lasso.csv")
    assert header == ["x0", "y0", "value"]
    assert body.shape == (121, 3)
    assert np.all(body[:, 2] == 0.0)
    assert (out / "if_surface_lasso.png").exists()
    assert (out / "manifest.txt").exists()


def test_rerun_reproduces_csv_bit_identically(tmp_path):
    cfg = write_config(tmp_path / "c.ini", BASE_IF.replace("beta0 = 0.0",
                                                           "beta0 = 1.5"))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg, "--out", str(out1), "--no-plot"]) == 0
    assert main(["run", cfg, "--out", str(out2), "--no-plot"]) == 0
    b1 = (out1 / "if_surface_lasso.csv").read_bytes()
    b2 = (out2 / "if_surface_lasso.csv").read_bytes()
    assert b1 == b2


def test_no_plot_skips_pngs(tmp_path):
    cfg = write_config(tmp_path / "c.ini", BASE_IF)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--no-plot"]) == 0
    assert not list(out.glob("*.png"))


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini",
                       BASE_IF + "\n[experiment2]\nfoo = 1\n")
    assert main(["run", cfg]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: config:")
    assert "\n" not in err.strip()


def test_unknown_option_is_config_error(tmp_path):
    cfg = write_config(tmp_path / "c.ini",
                       BASE_IF.replace("lambda = 0.1", "lambda = 0.1\nfoo = 2"))
    assert main(["run", cfg]) == 2


def test_missing_required_grid_is_config_error(tmp_path):
    text = BASE_IF.replace("kind = if_surface", "kind = bias_curve")
    cfg = write_config(tmp_path / "c.ini", text.replace("x0 = -10:10:11\n", "")
                       .replace("y0 = -10:10:11\n", ""))
    assert main(["run", cfg]) == 2


def test_numerical_failure_removes_partial_outputs(tmp_path, capsys):
    # SCAD closed form is undefined when E[x^2] <= 1/(a - 1)
    text = """
[experiment]
kind = bias_curve
seed = 1
n_draws = 2000

[model]
x_var = 0.2

[functionals]
names = scad
lambda = 0.1

[grid]
beta0 = -1:1:5
"""
    cfg = write_config(tmp_path / "c.ini", text)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: numerical:")
    assert not list(out.glob("*.csv"))
    assert not (out / "manifest.txt").exists()


def test_bias_curve_shapes(tmp_path):
    text = """
[experiment]
kind = bias_curve
seed = 9
n_draws = 2000

[functionals]
names = ls, lasso
lambda = 0.1

[grid]
beta0 = -2:2:9
"""
    cfg = write_config(tmp_path / "c.ini", text)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--no-plot"]) == 0
    header, ls = read_csv(out / "bias_curve_ls.csv")
    assert header == ["param", "value", "stderr"]
    assert np.all(ls[:, 1] == 0.0)
    _, lasso = read_csv(out / "bias_curve_lasso.csv")
    unshrunk = np.abs(lasso[:, 0]) > 0.1
    assert np.allclose(lasso[unshrunk, 1],
                       -0.1 * np.sign(lasso[unshrunk, 0]), atol=1e-12)


def test_sc_surface_and_manifest(tmp_path):
    text = """
[experiment]
kind = sc_surface
seed = 4

[model]
beta0 = 1.5

[functionals]
names = ls
lambda = 0.1

[sample]
n = 50

[grid]
x0 = -10:10:5
y0 = -10:10:5
"""
    cfg = write_config(tmp_path / "c.ini", text)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--no-plot"]) == 0
    header, body = read_csv(out / "sc_surface_ls.csv")
    assert header == ["x0", "y0", "value"]
    assert body.shape == (25, 3)
    manifest = (out / "manifest.txt").read_text()
    for key in ("experiment", "seed", "n_draws", "penreg_version",
                "numpy_version", "wall_time_s", "outputs"):
        assert f"{key} = " in manifest


def test_mse_convergence_runs_small(tmp_path):
    text = """
[experiment]
kind = mse_convergence
seed = 6
n_draws = 5000

[model]
beta0 = 1.5

[functionals]
names = lasso
lambda = 0.1

[grid]
n = 50,100

[sample]
R = 20
"""
    cfg = write_config(tmp_path / "c.ini", text)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--no-plot"]) == 0
    _, emp = read_csv(out / "mse_convergence_lasso_empirical.csv")
    _, pop = read_csv(out / "mse_convergence_lasso_population.csv")
    assert emp.shape == pop.shape == (2, 3)


def test_asv_curve_runs_small(tmp_path):
    text = """
[experiment]
kind = asv_curve
seed = 8
n_draws = 5000

[model]
beta0 = 0.5

[functionals]
names = lasso
lambda = 0.1

[grid]
lambda = 0:1:6
"""
    cfg = write_config(tmp_path / "c.ini", text)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out), "--no-plot"]) == 0
    _, body = read_csv(out / "asv_curve_lasso.csv")
    assert body.shape == (6, 3)
    # beyond the shrinkage threshold the variance is exactly zero
    assert np.all(body[body[:, 0] > 0.5, 1] == 0.0)


def test_verify_command_requires_verify_kind(tmp_path):
    cfg = write_config(tmp_path / "c.ini", BASE_IF)
    assert main(["verify", cfg]) == 2


def test_verify_battery_passes(tmp_path, capsys):
    text = """
[experiment]
kind = verify
seed = 12
n_draws = 20000

[functionals]
lambda = 0.1
"""
    cfg = write_config(tmp_path / "c.ini", text)
    out = tmp_path / "out"
    assert main(["verify", cfg, "--out", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "PASS" in captured and "FAIL" not in captured
    assert (out / "verify_report.csv").exists()


def test_console_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "penreg.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "run" in proc.stdout and "verify" in proc.stdout
