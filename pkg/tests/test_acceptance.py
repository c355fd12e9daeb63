"""Acceptance criteria 1-13.

Each ``criterion_k`` function measures its quantities and returns
``(passed, detail)``.  The pytest wrappers assert on ``passed`` and the
conftest prints one PASS/FAIL line per criterion at the end of the run.
Run ``python tests/test_acceptance.py [k ...]`` for the same lines without
pytest; criterion 4 (several GB at P3, n = 64) always runs in a child
process so an out-of-memory kill is reported as a failure, not a crash.
"""
import json
import subprocess
import sys

import numpy as np
import pytest

from pgsolve.duality import TestNormConfig, dual_norm_identities_check, jq_pairing, jV_gateaux, jV_residual
from pgsolve.experiments import Case, make_mesh, make_spaces, refinement_study, run_case
from pgsolve.fem import CellQuadrature, FieldFunction, build_space, tabulate
from pgsolve.mesh import (build_corner_modified_mesh, build_interval_mesh, build_unit_square_mesh,
                          nearest_interior_vertex, patch_area_ratio)
from pgsolve.oracle import ProjectionProblem, l2_project, lq_project, optimality_residual
from pgsolve.problems import make_example
from pgsolve.solver import solve_mixed


def rel(a, b):
    return abs(a - b) / abs(b)


# 1. duality identities
def criterion_1():
    rng = np.random.default_rng(1)
    spaces = [build_space(build_interval_mesh(5), 3), build_space(build_unit_square_mesh("M2", 3), 2)]
    worst = 0.0
    for k in range(50):
        sp = spaces[k % 2]
        q = float(rng.choice([1.01, 1.2, 1.5, 2.0, 3.0, 7.0]))
        v = FieldFunction(sp, rng.uniform(-1, 1, sp.dim))
        dual, primal = dual_norm_identities_check(v, q, order=20)
        nq = primal ** (q / (q - 1))  # ||v||_q^q
        worst = max(worst, rel(jq_pairing(v, v, q, order=20), nq), rel(dual, primal))
    return worst <= 1e-8, f"max relative defect {worst:.2e} (tol 1e-8)"


# 2. Jacobian vs central differences
def criterion_2():
    rng = np.random.default_rng(2)
    V = build_space(build_unit_square_mesh("M2", 2), 2)
    worst = 0.0
    for qd in (2.0, 3.0, 101.0):
        cfg = TestNormConfig(q=qd / (qd - 1), epsilon=0.3, alpha=1.0, omega="inflow_distance", b=(2.0, 1.0))
        scale = 0.125 if qd > 50 else 1.0
        for _ in range(20):
            base = 1.0 + V.nodes @ np.array([1.0, 2.0])
            r = scale * (base + 0.05 * rng.standard_normal(V.dim))
            z = scale * rng.standard_normal(V.dim)
            w = FieldFunction(V, rng.standard_normal(V.dim))
            h = 1e-6
            fd = (jV_residual(FieldFunction(V, r + h * z), w, cfg)
                  - jV_residual(FieldFunction(V, r - h * z), w, cfg)) / (2 * h)
            ex = jV_gateaux(FieldFunction(V, r), FieldFunction(V, z), w, cfg)
            worst = max(worst, rel(fd, ex))
    return worst <= 1e-5, f"max relative FD error {worst:.2e} over q' in {{2, 3, 101}} (tol 1e-5)"


def galerkin_1d(eps, n):
    """Textbook P1 Galerkin for -eps u'' + u' = 0, u(0)=0, u(1)=1, uniform mesh."""
    h = 1.0 / n
    A = (np.diag(np.full(n - 1, 2 * eps / h)) + np.diag(np.full(n - 2, -eps / h - 0.5), -1)
         + np.diag(np.full(n - 2, -eps / h + 0.5), 1))
    rhs = np.zeros(n - 1)
    rhs[-1] = eps / h - 0.5
    return np.concatenate([[0.0], np.linalg.solve(A, rhs), [1.0]])


# 3. q = 2 reduction
def criterion_3():
    prob = make_example("ex1", 1.0, bc_mode="strong")
    mesh = make_mesh("interval", 32, prob.b)
    U = build_space(mesh, 1, [("all", prob.g)])
    V = build_space(mesh, 1, [("all", 0.0)])
    sol = solve_mixed(prob, U, V, TestNormConfig(q=2.0, epsilon=1.0))
    order = np.argsort(U.nodes[:, 0])
    err = np.abs(sol.u_n.coeffs[order] - galerkin_1d(1.0, 32)).max()
    Ue, Ve = make_spaces(make_example("ex1", 1.0), mesh, 1, 2)
    steps = solve_mixed(make_example("ex1", 1.0), Ue, Ve, TestNormConfig(q=2.0, epsilon=1.0)).newton_iterations
    ok = err <= 1e-8 and sol.newton_iterations == 1 and steps == 1
    return ok, f"Newton steps {sol.newton_iterations}/{steps}, max |u_n - Galerkin| {err:.2e} (tol 1e-8)"


# 4. optimal rates for P2, P3
def criterion_4_measure():
    out = {}
    for p in (2, 3):
        tab, _ = refinement_study(Case(example="ex2", epsilon=1.0, q=1.2, mesh="M1", p_n=p, delta_p=2),
                                  [4, 8, 16, 32, 64])
        out[p] = tab.final_rates()
    return out


def criterion_4():
    code = ("import json, sys; sys.path.insert(0, 'tests'); import test_acceptance as t; "
            "print(json.dumps({k: list(v) for k, v in t.criterion_4_measure().items()}))")
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         cwd=str(__import__("pathlib").Path(__file__).resolve().parents[1]))
    if res.returncode != 0:
        return False, f"child process failed (exit {res.returncode}): {res.stderr.strip()[-200:]}"
    rates = json.loads(res.stdout.strip().splitlines()[-1])
    ok, parts = True, []
    for p, (lq, w1) in rates.items():
        p = int(p)
        ok &= abs(lq - (p + 1)) <= 0.2 and abs(w1 - p) <= 0.2
        parts.append(f"P{p}: eoc L^q {lq:.3f} (want {p + 1}), W^1,q {w1:.3f} (want {p})")
    return ok, "; ".join(parts)


# 5. convection-dominated rate 1/q
def criterion_5():
    ok, parts = True, []
    for q in (1.2, 2.0):
        tab, _ = refinement_study(Case(example="ex2", epsilon=1e-4, q=q, mesh="M1", p_n=1, delta_p=2),
                                  [2, 4, 8, 16, 32, 64])
        r = tab.final_rates()[0]
        ok &= abs(r - 1 / q) <= 0.15
        parts.append(f"q={q:g}: eoc {r:.3f} (want {1 / q:.3f})")
    return ok, "; ".join(parts)


# 6. test-space enrichment saturation
def criterion_6():
    e = [run_case(Case(example="ex2", epsilon=1.0, q=1.2, mesh="M1", n=8, p_n=1, delta_p=d))["error_Lq"]
         for d in (2, 4, 7)]
    spread = max(e) / min(e) - 1
    e1, e2 = (run_case(Case(example="ex2", epsilon=1e-4, q=1.01, mesh="M1", n=8, p_n=1, delta_p=d))["error_Lq"]
              for d in (1, 2))
    ok = spread <= 0.1 and e1 > e2
    return ok, f"dp in {{2,4,7}} spread {spread:.3f} (tol 0.10); eps=1e-4 err dp=1 {e1:.4f} > dp=2 {e2:.4f}"


def undershoots(qs, eps=1e-5):
    return [abs(min(run_case(Case(example="ex1", epsilon=eps, q=q, n=8, p_n=1, delta_p=9))["min_u"], 0.0))
            for q in qs]


# 7. vanishing undershoot in 1D
def criterion_7():
    m = undershoots([2, 1.7, 1.4, 1.2, 1.1, 1.05, 1.01])
    mono = bool(np.all(np.diff(m) < 0))
    ratio = m[-1] / m[0]
    return mono and ratio <= 0.1, f"strictly decreasing: {mono}; |min u| q=1.01 / q=2 = {ratio:.4f} (tol 0.1)"


# 8. epsilon robustness
def criterion_8():
    m = [abs(min(run_case(Case(example="ex1", epsilon=e, q=1.01, n=8, p_n=1, delta_p=9))["min_u"], 0.0))
         for e in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)]
    var = max(m[2:]) / min(m[2:]) - 1
    return var <= 0.2, f"relative variation over eps in {{1e-5,1e-6,1e-7}} {var:.4f} (tol 0.2)"


# 9. boundary condition / norm taxonomy
def criterion_9():
    def err(bc, om):
        c = Case(example="ex1", epsilon=1e-6, q=2.0, alpha=1.0, omega=om, bc_mode=bc, n=8, p_n=1, delta_p=9)
        return run_case(c)["error_Lq"]
    good = err("strong", "inflow_distance")
    bad = [err("strong", "zero"), err("strong", "one")]
    weak = err("weak", "one")
    ok = min(bad) > 5 * good and weak <= 2 * good
    return ok, (f"strong omega=0,1 errors {bad[0]:.3f}, {bad[1]:.3f} vs omega=x+eps {good:.3f} "
                f"(ratios {bad[0] / good:.2f}, {bad[1] / good:.2f}, want > 5); weak omega=1 {weak:.3f} "
                f"(ratio {weak / good:.2f}, want <= 2)")


def gibbs_case(mesh, q, **kw):
    return Case(example="ex2", epsilon=1e-6, mesh=mesh, n=8, p_n=1, delta_p=7, q=q, **kw)


# 10. mesh-dependent Gibbs behaviour
def criterion_10():
    m2 = [run_case(gibbs_case("M2", q))["max_over"] for q in (2.0, 1.01)]
    m3 = [run_case(gibbs_case("M3", q))["max_over"] for q in (2.0, 1.01)]
    r2, r3 = m2[1] / m2[0], m3[1] / m3[0]
    return r2 <= 0.15 and r3 >= 0.7, f"Mesh 2 ratio {r2:.4f} (want <= 0.15); Mesh 3 ratio {r3:.4f} (want >= 0.7)"


# 11. FEM overshoot vs L^q best approximation
def criterion_11():
    ok, parts = True, []
    for q in (1.01, 1.2, 1.5, 2.0):
        o = run_case(gibbs_case("M2", q, projection=True))
        a, b = o["max_over"], o["proj_max_over"]
        good = abs(a - b) <= 0.25 * b + 1e-3
        ok &= good
        parts.append(f"q={q:g}: fem {a:.4f} proj {b:.4f}{'' if good else ' (outside band)'}")
    return ok, "; ".join(parts)


# 12. corner-mesh fix
def criterion_12():
    ex3 = lambda mesh: Case(example="ex3", epsilon=1e-6, b=(2.0, 1.0), mesh=mesh, n=8, p_n=1, delta_p=7, q=1.01)
    plain = run_case(ex3("M2"))["line_over"]
    fixed = run_case(ex3("corner"))["line_over"]
    m2, mc = build_unit_square_mesh("M2", 8), build_corner_modified_mesh(8)
    r2 = patch_area_ratio(m2, nearest_interior_vertex(m2, (1.0, 1.0)))
    rc = patch_area_ratio(mc, nearest_interior_vertex(mc, (1.0, 1.0)))
    ok = fixed <= 0.1 * plain and r2 == 3.0 and rc <= 1.0
    return ok, (f"line overshoot modified {fixed:.2e} vs Mesh 2 {plain:.2e} (want ratio <= 0.1); "
                f"patch ratios {r2:g} (want 3), {rc:.3f} (want <= 1)")


def dense_l2(space, target, order=12):
    quad = CellQuadrature(space.mesh, order)
    tab = tabulate(space, quad)
    t = target(quad.points.reshape(-1, space.mesh.dim)).reshape(quad.weights.shape)
    M = np.zeros((space.dim, space.dim))
    b = np.zeros(space.dim)
    for c in range(space.mesh.n_cells):
        V, w, d = tab.vals[c], quad.weights[c], tab.dofs[c]
        M[np.ix_(d, d)] += V.T @ (w[:, None] * V)
        b[d] += V.T @ (w * t[c])
    return np.linalg.solve(M, b)


# 13. projection oracle certificate
def criterion_13():
    prob = make_example("ex2", 1e-2)
    U = build_space(make_mesh("M2", 8, prob.b), 1, [("all", prob.g)])
    cert = 0.0
    for q in (1.2, 1.5, 3.0):
        u = lq_project(ProjectionProblem(U, prob.exact, q))
        cert = max(cert, np.abs(optimality_residual(u, prob.exact, q)).max())
    smooth = lambda x: np.exp(x[:, 0]) * np.cos(2 * x[:, 1])
    U2 = build_space(build_unit_square_mesh("M3", 4), 2)
    d = np.abs(lq_project(ProjectionProblem(U2, smooth, 2.0), order=12).coeffs - dense_l2(U2, smooth)).max()
    d = max(d, np.abs(l2_project(U2, smooth, order=12).coeffs - dense_l2(U2, smooth)).max())
    return cert <= 1e-8 and d <= 1e-10, f"max certificate {cert:.2e} (tol 1e-8); q=2 vs dense L2 {d:.2e} (tol 1e-10)"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 14)}
SLOW = {4, 5, 10, 11, 12}


@pytest.mark.parametrize("k", [pytest.param(k, marks=pytest.mark.slow) if k in SLOW else k for k in CRITERIA])
def test_criterion(k, acceptance_results):
    try:
        ok, detail = CRITERIA[k]()
    except Exception as err:
        acceptance_results[k] = (False, f"raised {type(err).__name__}: {err}")
        raise
    acceptance_results[k] = (ok, detail)
    assert ok, detail


if __name__ == "__main__":
    for k in [int(a) for a in sys.argv[1:]] or list(CRITERIA):
        ok, detail = CRITERIA[k]()
        print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
