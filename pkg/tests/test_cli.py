import csv
import subprocess
import sys

import numpy as np
import pytest

from pgsolve.cli import RECIPES, ConfigError, main, parse_config
from pgsolve.mesh import build_unit_square_mesh, read_mesh

BASE = """
[experiment]
example = ex1
epsilon = 1e-2
mesh = interval
n = 4
p_n = 1
delta_p = 2
"""


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_sweep_product():
    cases, solver, out = parse_config(BASE + "q = 2, 1.5\nomega = one, zero\n[solver]\ntol = 1e-9\n")
    assert len(cases) == 4
    assert [c.q for c in cases] == [2.0, 1.5, 2.0, 1.5]
    assert solver == {"tol": 1e-9} and out["dir"] == "out"


@pytest.mark.parametrize("extra, word", [
    ("q = \n", "q"),
    ("q = 2,,1.5\n", "q"),
    ("q = 1.0\n", "q"),
    ("omega = two\n", "omega"),
    ("colour = red\n", "colour"),
    ("q = 2\n[solver]\ntol = fast\n", "tol"),
])
def test_config_errors(extra, word):
    with pytest.raises(ConfigError, match=word):
        parse_config(BASE + extra)


def test_empty_sweep_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(BASE + "q =\n")
    assert main(["run", str(cfg)]) == 2
    assert "q" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == 2


def test_run_outputs(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(BASE + "q = 2, 1.5\n[output]\nsample = 11\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "metrics.csv")
    assert [float(r["q"]) for r in rows] == [2.0, 1.5]
    assert rows[0]["newton_iterations"] == "1"
    sol = read_csv(tmp_path / "o" / "solution.csv")
    assert len(sol) == 11 and {"u_n_0", "r_m_1"} <= set(sol[0])
    assert "# case 1" in (tmp_path / "o" / "newton.log").read_text()


def test_refinement_rows_get_eoc(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(BASE.replace("n = 4", "n = 4, 8").replace("epsilon = 1e-2", "epsilon = 1") + "q = 2\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "metrics.csv")
    assert rows[0]["eoc_Lq"] == "" and float(rows[1]["eoc_Lq"]) > 1.5


def test_nonconvergence_exit_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(BASE + "q = 2, 1.01\n[solver]\nmax_iter = 1\nmax_splits = 0\nstages = 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 1
    # partial results of the converged case survive
    assert len(read_csv(tmp_path / "metrics.csv")) == 1


def test_mesh_subcommand(tmp_path):
    path = tmp_path / "m.txt"
    assert main(["mesh", "M3", "4", "--mesh-out", str(path)]) == 0
    m = read_mesh(path)
    ref = build_unit_square_mesh("M3", 4)
    assert np.array_equal(m.vertices, ref.vertices) and np.array_equal(m.cells, ref.cells)
    assert main(["mesh", "M9", "4", "--mesh-out", str(path)]) == 2


def test_mesh_file_in_config(tmp_path):
    path = tmp_path / "m.txt"
    main(["mesh", "M2", "2", "--mesh-out", str(path)])
    cases, _, _ = parse_config(BASE.replace("ex1", "ex2").replace("interval", f"file:{path}") + "q = 2\n")
    assert cases[0].mesh == f"file:{path}"


def test_recipes_all_parse():
    assert {"fig1", "fig2", "fig3", "fig5", "fig6", "fig7", "fig8", "fig11", "fig12", "fig13", "fig15",
            "fig16"} == set(RECIPES)
    for name, text in RECIPES.items():
        assert parse_config(text, name)[0]
    # all six norm/boundary-condition combinations, both epsilons, both alphas, two q values
    assert len(parse_config(RECIPES["fig5"])[0]) == 48


def test_recipe_fig6_monotone_and_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["recipe", "fig6", "--out", str(tmp_path / d)]) == 0
    rows = read_csv(tmp_path / "a" / "metrics.csv")
    mins = [abs(float(r["min_u"])) for r in rows]
    assert [float(r["q"]) for r in rows] == [2, 1.7, 1.4, 1.2, 1.1, 1.05, 1.01]
    assert np.all(np.diff(mins) < 0)
    for f in ("metrics.csv", "solution.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert (tmp_path / "a" / "config.ini").exists()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "pgsolve.cli", "recipe", "nope"], capture_output=True, text=True)
    assert res.returncode == 2


def test_threads_env(tmp_path, monkeypatch):
    cfg = tmp_path / "c.ini"
    cfg.write_text(BASE + "q = 2, 1.5\n")
    main(["run", str(cfg), "--out", str(tmp_path / "one")])
    monkeypatch.setenv("PGSOLVE_THREADS", "2")
    main(["run", str(cfg), "--out", str(tmp_path / "two")])
    assert (tmp_path / "one" / "metrics.csv").read_bytes() == (tmp_path / "two" / "metrics.csv").read_bytes()
