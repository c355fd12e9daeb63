"""Command line runner: ``pgsolve run``, ``pgsolve recipe`` and ``pgsolve mesh``.

Configuration files are INI style.  The ``[experiment]`` section lists the
case parameters; any of them may hold a comma separated list, in which case
the run sweeps over the cartesian product (in the fixed order of
``SWEEP_KEYS``).  ``[solver]`` overrides SolverConfig fields and
``[output]`` sets the output directory and sampling density.

Example::

    [experiment]
    example = ex1
    epsilon = 1e-5
    q = 2, 1.7, 1.4, 1.2, 1.1, 1.05, 1.01
    mesh = interval
    n = 8
    p_n = 1
    delta_p = 9

    [output]
    dir = fig6
"""
from __future__ import annotations

import argparse
import configparser
import io
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .experiments import MESH_KINDS, Case, make_mesh, run_case
from .io import write_samples
from .mesh import PATTERNS, write_mesh
from .metrics import estimate_eoc, format_float
from .problems import ExampleId
from .solver import NonConvergence, SingularLinearSystem, SolverConfig

__all__ = ["main", "ConfigError", "parse_config", "RECIPES"]

SWEEP_KEYS = ("example", "epsilon", "b", "bc_mode", "omega", "alpha", "mesh", "p_n", "delta_p",
              "h_levels", "n", "q")
SOLVER_KEYS = {"tol": float, "max_iter": int, "stages": int, "stage_tol": float, "abs_floor": float,
               "hessian_floor": float, "max_splits": int}
METRIC_COLUMNS = ("case", "example", "epsilon", "b", "bc_mode", "omega", "alpha", "mesh", "n", "p_n",
                  "delta_p", "h_levels", "q", "h", "dofs_u", "dofs_v", "newton_iterations", "residual",
                  "orthogonality", "min_u", "max_over", "error_Lq", "error_W1q", "eoc_Lq", "eoc_W1q",
                  "line_y", "line_over", "proj_max_over", "proj_min_u")


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _parse_value(key, raw):
    raw = raw.strip()
    if key == "b":
        items = [s for s in raw.split(";") if s.strip()]
        return [tuple(float(c) for c in s.replace(",", " ").split()) for s in items]
    items = [s.strip() for s in raw.split(",")]
    if any(s == "" for s in items):
        raise ValueError("empty list entry")
    if key in ("epsilon", "q", "alpha"):
        return [float(s) for s in items]
    if key in ("n", "p_n", "delta_p", "h_levels"):
        return [None if s.lower() == "none" else int(s) for s in items]
    return items


def parse_config(text: str, source: str = "<config>"):
    """Return (cases, solver overrides, output options); raises ConfigError."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    if not cp.has_section("experiment"):
        raise ConfigError(f"{source}: missing [experiment] section")
    exp = cp["experiment"]
    known = set(SWEEP_KEYS) | {"projection"}
    for key in exp:
        if key not in known:
            raise ConfigError(f"{source}: [experiment] unknown field {key!r}")
    values = {}
    for key in SWEEP_KEYS:
        if key not in exp:
            continue
        try:
            vals = _parse_value(key, exp[key])
        except ValueError as err:
            raise ConfigError(f"{source}: [experiment] field {key!r}: {err}") from None
        if not vals:
            raise ConfigError(f"{source}: [experiment] field {key!r}: empty sweep list")
        values[key] = vals
    for ex in values.get("example", ["ex1"]):
        if ex not in [e.value for e in ExampleId]:
            raise ConfigError(f"{source}: [experiment] field 'example': unknown example {ex!r}")
    for q in values.get("q", []):
        if not q > 1:
            raise ConfigError(f"{source}: [experiment] field 'q': {q} not in (1, inf)")
    for e in values.get("epsilon", []):
        if not e > 0:
            raise ConfigError(f"{source}: [experiment] field 'epsilon': must be positive")
    for om in values.get("omega", []):
        if om not in ("zero", "one", "inflow_distance"):
            raise ConfigError(f"{source}: [experiment] field 'omega': unknown variant {om!r}")
    for bc in values.get("bc_mode", []):
        if bc not in ("strong", "weak"):
            raise ConfigError(f"{source}: [experiment] field 'bc_mode': unknown mode {bc!r}")
    for m in values.get("mesh", []):
        if m not in MESH_KINDS and not m.startswith("file:"):
            raise ConfigError(f"{source}: [experiment] field 'mesh': unknown mesh {m!r}")
    solver = {}
    if cp.has_section("solver"):
        for key, raw in cp["solver"].items():
            if key not in SOLVER_KEYS:
                raise ConfigError(f"{source}: [solver] unknown field {key!r}")
            try:
                solver[key] = SOLVER_KEYS[key](raw)
            except ValueError:
                raise ConfigError(f"{source}: [solver] field {key!r}: bad value {raw!r}") from None
        try:
            SolverConfig(**solver)
        except ValueError as err:
            raise ConfigError(f"{source}: [solver] {err}") from None
    output = {"dir": "out", "sample": None}
    if cp.has_section("output"):
        output["dir"] = cp["output"].get("dir", "out")
        if "sample" in cp["output"]:
            try:
                output["sample"] = int(cp["output"]["sample"])
            except ValueError:
                raise ConfigError(f"{source}: [output] field 'sample' must be an integer") from None
    projection = exp.getboolean("projection", fallback=False) if "projection" in exp else False
    keys = [k for k in SWEEP_KEYS if k in values]
    cases = []
    for combo in itertools.product(*(values[k] for k in keys)):
        kw = dict(zip(keys, combo))
        if "h_levels" in kw and kw["h_levels"] is not None:
            kw.setdefault("delta_p", None)
            if kw["delta_p"] is not None:
                raise ConfigError(f"{source}: give either delta_p or h_levels, not both")
        cases.append(Case(projection=projection, solver=dict(solver), **kw))
    return cases, solver, output


def _threads():
    try:
        return max(1, int(os.environ.get("PGSOLVE_THREADS", "1")))
    except ValueError:
        return 1


def _run_one(case):
    buf = io.StringIO()
    try:
        out, sol = run_case(case, log=buf, with_solution=True)
        return out, sol.u_n, sol.r_m, buf.getvalue(), None
    except (NonConvergence, SingularLinearSystem) as err:
        return None, None, None, buf.getvalue(), str(err)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, tuple):
        return " ".join(format_float(c) for c in v)
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def _add_eoc(rows):
    """eoc columns for consecutive rows differing only in n."""
    group_keys = [k for k in SWEEP_KEYS if k != "n"]
    for i in range(1, len(rows)):
        a, b = rows[i - 1], rows[i]
        if a is None or b is None or any(a.get(k) != b.get(k) for k in group_keys) or not b["n"] > a["n"]:
            continue
        for col, err in (("eoc_Lq", "error_Lq"), ("eoc_W1q", "error_W1q")):
            if err in a and err in b:
                b[col] = estimate_eoc([a["h"], b["h"]], [a[err], b[err]])[0]


def _write_metrics(path, rows):
    with open(path, "w") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for k, row in enumerate(rows):
            if row is None:
                continue
            row = dict(row, case=k)
            fh.write(",".join(_cell(row.get(c)) for c in METRIC_COLUMNS) + "\n")


def run(cases, output, out_dir=None) -> int:
    out = Path(out_dir or output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    rows, fields, failed = [], {}, []
    threads = min(_threads(), len(cases))
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            results = list(pool.map(_run_one, cases))
    else:
        results = map(_run_one, cases)
    with open(out / "newton.log", "w") as log:
        for k, (row, u, r, text, err) in enumerate(results):
            log.write(f"# case {k}\n{text}")
            if err is not None:
                log.write(f"# case {k} failed: {err}\n")
                failed.append((k, err))
            rows.append(row)
            if u is not None:
                fields[f"u_n_{k}"] = u
                fields[f"r_m_{k}"] = r
            _add_eoc(rows)
            _write_metrics(out / "metrics.csv", rows)
    if fields:
        dim = next(iter(fields.values())).space.mesh.dim
        n = output.get("sample") or (1001 if dim == 1 else 65)
        write_samples(out / "solution.csv", fields, n)
    for k, err in failed:
        print(f"case {k}: {err}", file=sys.stderr)
    return 1 if failed else 0


_FIG5 = """
[experiment]
example = ex1
epsilon = 1e-3, 1e-6
bc_mode = strong, weak
omega = zero, one, inflow_distance
alpha = 0, 1
mesh = interval
n = 8
p_n = 1
delta_p = 9
q = 2, 1.01
"""

RECIPES = {
    "fig1": """
[experiment]
example = ex2
epsilon = 1
q = 1.2
mesh = M1
p_n = 1
delta_p = 1, 4, 7
n = 2, 4, 8, 16, 32
""",
    "fig2": """
[experiment]
example = ex2
epsilon = 1
q = 1.2
mesh = M1
p_n = 2, 3
delta_p = 2
n = 2, 4, 8, 16, 32
""",
    "fig3": """
[experiment]
example = ex2
epsilon = 1e-4
q = 1.01, 1.2, 2
mesh = M1
p_n = 1
delta_p = 1, 2, 4
n = 4, 8, 16, 32
""",
    "fig5": _FIG5,
    "fig6": """
[experiment]
example = ex1
epsilon = 1e-5
mesh = interval
n = 8
p_n = 1
delta_p = 9
q = 2, 1.7, 1.4, 1.2, 1.1, 1.05, 1.01
""",
    "fig7": """
[experiment]
example = ex1
epsilon = 1e-6
mesh = interval
n = 8
p_n = 1
delta_p = 1, 2, 3, 4, 5, 6, 7, 8, 9
q = 1.01
""",
    "fig8": """
[experiment]
example = ex1
epsilon = 1e-3, 1e-4, 1e-5, 1e-6, 1e-7
mesh = interval
n = 8
p_n = 1
delta_p = 9
q = 1.01
""",
    "fig11": """
[experiment]
example = ex2
epsilon = 1e-6
mesh = M1, M2, M3, M4
n = 8
p_n = 1
delta_p = 7
q = 2, 1.01
""",
    "fig12": """
[experiment]
example = ex2
epsilon = 1e-6
mesh = M2
n = 8
p_n = 1
delta_p = 7
alpha = 1, 0
q = 1.01, 1.2, 1.5, 2
projection = yes
""",
    "fig13": """
[experiment]
example = ex3
epsilon = 1e-6
b = 2 1
mesh = M2, corner
n = 8
p_n = 1
delta_p = 7
q = 2, 1.01
""",
    "fig15": """
[experiment]
example = ex4
epsilon = 1e-6
mesh = layerA, layerB
n = 8
p_n = 1
delta_p = 7
q = 2, 1.1
""",
    "fig16": """
[experiment]
example = ex4
epsilon = 1e-6
b = 2 1.2; 2 1.06
mesh = layerB
n = 8
p_n = 1
delta_p = 7
q = 2, 1.1
""",
}

# fig7 also covers test spaces from h-refinement; run as a second sweep
RECIPE_EXTRA = {
    "fig7": """
[experiment]
example = ex1
epsilon = 1e-5
mesh = interval
n = 8
p_n = 1
h_levels = 1, 2, 3, 4
q = 1.01
""",
}


def _cmd_run(args):
    try:
        text = Path(args.config).read_text()
        cases, _, output = parse_config(text, args.config)
    except (OSError, ConfigError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    return run(cases, output, args.out)


def _cmd_recipe(args):
    if args.name not in RECIPES:
        print(f"unknown recipe {args.name!r}; available: {', '.join(sorted(RECIPES))}", file=sys.stderr)
        return 2
    out = Path(args.out or args.name)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    parts = [("", RECIPES[args.name])]
    if args.name in RECIPE_EXTRA:
        parts.append(("h_refinement", RECIPE_EXTRA[args.name]))
    for sub, text in parts:
        target = out / sub if sub else out
        target.mkdir(parents=True, exist_ok=True)
        (target / "config.ini").write_text(text.lstrip())
        cases, _, output = parse_config(text, f"recipe {args.name}")
        status = max(status, run(cases, output, target))
    return status


def _cmd_mesh(args):
    if args.pattern not in MESH_KINDS:
        print(f"unknown mesh pattern {args.pattern!r}; available: {', '.join(MESH_KINDS)}", file=sys.stderr)
        return 2
    b = (1.0,) if args.pattern == "interval" else tuple(_floats(args.b))
    try:
        mesh = make_mesh(args.pattern, args.n, b)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    write_mesh(mesh, args.mesh_out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pgsolve", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiment(s) described by a config file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("recipe", help="run a named figure recipe")
    p.add_argument("name", choices=sorted(RECIPES))
    p.add_argument("--out", help="output directory (default: recipe name)")
    p.set_defaults(func=_cmd_recipe)
    p = sub.add_parser("mesh", help="write a mesh file")
    p.add_argument("pattern", help=f"one of {', '.join(MESH_KINDS)}")
    p.add_argument("n", type=int)
    p.add_argument("--mesh-out", required=True)
    p.add_argument("--b", default="2,1", help="velocity used to tag Inflow/Outflow facets")
    p.set_defaults(func=_cmd_mesh)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
