"""Single experiment cases: problem, meshes, spaces, solve and measurements.

A :class:`Case` holds only plain values so sweeps can be farmed out to
worker processes; :func:`run_case` does the work and returns a flat dict
of measurements together with the solution.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from .duality import TestNormConfig
from .fem import build_space, enrich_space, evaluate, interpolate
from .mesh import (PATTERNS, build_corner_modified_mesh, build_interior_layer_mesh, build_interval_mesh,
                   build_unit_square_mesh, classify_boundary, nearest_interior_vertex, read_mesh)
from .metrics import ConvergenceTable, lq_error, w1q_error
from .oracle import ProjectionProblem, lq_project, overshoot_metrics
from .problems import make_example
from .solver import MixedSystem, SolverConfig, solve_mixed

__all__ = ["Case", "make_mesh", "make_spaces", "run_case", "refinement_study", "line_overshoot", "MESH_KINDS"]

MESH_KINDS = ("interval",) + PATTERNS + ("corner", "layerA", "layerB")


def make_mesh(kind: str, n: int, b):
    """Mesh by name, tagged Inflow/Outflow for velocity ``b``.

    ``kind`` is one of MESH_KINDS or ``file:PATH``.
    """
    if kind.startswith("file:"):
        mesh = read_mesh(kind[5:])
    elif kind == "interval":
        mesh = build_interval_mesh(n)
    elif kind in PATTERNS:
        mesh = build_unit_square_mesh(kind, n)
    elif kind == "corner":
        mesh = build_corner_modified_mesh(n)
    elif kind in ("layerA", "layerB"):
        mesh = build_interior_layer_mesh(kind[-1], n)
    else:
        raise ValueError(f"unknown mesh {kind!r}")
    return classify_boundary(mesh, b)


def make_spaces(prob, mesh, p_n: int, delta_p: Optional[int] = None, h_levels: Optional[int] = None):
    """Trial space with the Dirichlet data and the enriched test space."""
    U = build_space(mesh, p_n, [("all", prob.g)])
    if delta_p is None and h_levels is None:
        delta_p = 1
    V = enrich_space(U, delta_p=delta_p, levels=h_levels, bc=prob.bc_mode)
    return U, V


@dataclass
class Case:
    example: str = "ex1"
    epsilon: float = 1.0
    q: float = 2.0
    alpha: float = 1.0
    omega: str = "one"
    bc_mode: str = "weak"
    mesh: str = "interval"
    n: int = 8
    p_n: int = 1
    delta_p: Optional[int] = 1
    h_levels: Optional[int] = None
    b: Optional[Tuple[float, ...]] = None
    projection: bool = False
    solver: dict = field(default_factory=dict)

    def label(self):
        return {k: v for k, v in asdict(self).items() if k not in ("solver", "projection")}


def line_overshoot(u, ref, y: float, npts: int = 2001) -> float:
    """max over the horizontal line at height y of (u - ref)^+."""
    x = np.linspace(0.0, 1.0, npts)
    pts = np.column_stack([x, np.full(npts, y)])
    cells = u.space.mesh.locate(pts, tol=1e-10)
    return float(max(0.0, np.max(evaluate(u, pts, cells=cells) - evaluate(ref, pts, cells=cells))))


def run_case(case: Case, log=None, with_solution: bool = False):
    """Solve one case; returns a dict of measurements (and the solution if asked)."""
    prob = make_example(case.example, case.epsilon, b=case.b, bc_mode=case.bc_mode)
    mesh = make_mesh(case.mesh, case.n, prob.b)
    U, V = make_spaces(prob, mesh, case.p_n, case.delta_p, case.h_levels)
    vol = float(mesh.cell_measures().sum())
    norm = TestNormConfig(q=case.q, epsilon=case.epsilon, alpha=case.alpha, omega=case.omega,
                          b=tuple(prob.b), domain_measure=vol)
    cfg = SolverConfig(**case.solver)
    sysm = MixedSystem(prob, U, V, norm)
    sol = solve_mixed(prob, U, V, norm, cfg, log=log, system=sysm)
    out = dict(case.label())
    out.update(
        h=1.0 / case.n,
        dofs_u=len(sysm.fu),
        dofs_v=len(sysm.fv),
        newton_iterations=sol.newton_iterations,
        residual=sol.residual_norm,
        orthogonality=float(np.abs(sysm.BT @ sol.r_m.coeffs[sysm.fv]).max()),
        min_u=float(sol.u_n.coeffs.min()) if case.p_n == 1 else overshoot_metrics(sol.u_n, sol.u_n)[1],
    )
    ref = interpolate(U, prob.reference)
    out["max_over"], _ = overshoot_metrics(sol.u_n, ref)
    if prob.exact is not None:
        out["error_Lq"] = lq_error(sol.u_n, prob.exact, case.q)
        out["error_W1q"] = w1q_error(sol.u_n, prob.exact_grad, case.q)
    if mesh.dim == 2:
        y = mesh.vertices[nearest_interior_vertex(mesh, (1.0, 1.0)), 1]
        out["line_y"] = float(y)
        out["line_over"] = line_overshoot(sol.u_n, ref, y)
    if case.projection:
        target = prob.exact if prob.exact is not None else prob.reference
        # near q = 1 the unsmoothed certificate is below double precision resolution
        proj = lq_project(ProjectionProblem(U, target, case.q), certify=case.q >= 1.2)
        out["proj_max_over"], out["proj_min_u"] = overshoot_metrics(proj, ref)
    if with_solution:
        return out, sol
    return out


def refinement_study(case: Case, ns, warm_start: bool = True, log=None, error_subdivide: int = 0):
    """Solve ``case`` on meshes with n in ``ns``; returns (ConvergenceTable, solutions).

    With ``warm_start`` each level starts from the previous solution at the
    target q instead of running the continuation again.
    """
    prob = make_example(case.example, case.epsilon, b=case.b, bc_mode=case.bc_mode)
    table = ConvergenceTable()
    sols = []
    prev = None
    for n in ns:
        mesh = make_mesh(case.mesh, n, prob.b)
        U, V = make_spaces(prob, mesh, case.p_n, case.delta_p, case.h_levels)
        norm = TestNormConfig(q=case.q, epsilon=case.epsilon, alpha=case.alpha, omega=case.omega,
                              b=tuple(prob.b), domain_measure=float(mesh.cell_measures().sum()))
        cfg = SolverConfig(**case.solver)
        init = (prev.r_m, prev.u_n) if (warm_start and prev is not None) else None
        sol = solve_mixed(prob, U, V, norm, cfg, initial=init, log=log)
        table.add(1.0 / n, U.dim,
                  lq_error(sol.u_n, prob.exact, case.q, subdivide=error_subdivide),
                  w1q_error(sol.u_n, prob.exact_grad, case.q, subdivide=error_subdivide))
        sols.append(sol)
        prev = sol
    return table, sols
