"""Bilinear and linear forms of the convection-diffusion-reaction operator.

Two variational settings are provided:

* ``strong``: Dirichlet data on all of the boundary for both trial and test
  functions, with the convection moved onto the test function,
  ``eps (grad u, grad v) - (u, b.grad v) - (div b u, v) + (c u, v)``.
* ``weak``: test functions vanish only on the Outflow boundary and the
  diffusive flux on the Inflow boundary stays in the form,
  ``eps (grad u, grad v) + (b.grad u, v) + (c u, v) - eps <grad u.n, v>_in``.

Matrices are returned over all dofs with rows indexing the test space and
columns the trial space; restriction to free dofs is done by the solver.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .fem import (CellQuadrature, FieldFunction, FunctionSpace, ScatterPattern, _ancestor,
                  evaluate_on_cells, tabulate)
from .mesh import BoundaryTag
from .problems import ProblemDefinition
from .quadrature import quadrature_rule

__all__ = ["bilinear_matrix", "load_vector", "b_eps", "b_eps_weak", "load", "default_order"]


def default_order(test: FunctionSpace) -> int:
    return 2 * test.degree + 2


def _check_pair(trial: FunctionSpace, test: FunctionSpace):
    try:
        _ancestor(test.mesh, trial.mesh)
    except ValueError:
        raise ValueError("test mesh must equal or refine the trial mesh") from None


def _facet_quadrature(mesh, facets, order):
    """Points (nf, nq, d) and weights (nf, nq) on boundary facets."""
    fv = mesh.boundary_facets[facets]
    if mesh.dim == 1:
        return mesh.vertices[fv[:, 0]][:, None, :], np.ones((len(facets), 1))
    rule = quadrature_rule(1, order)
    a = mesh.vertices[fv[:, 0]]
    b = mesh.vertices[fv[:, 1]]
    t = rule.points[:, 0]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    w = np.linalg.norm(b - a, axis=1)[:, None] * rule.weights[None, :]
    return pts, w


def _inflow_flux_local(trial, test, eps, order):
    """Local matrices of -eps <grad psi.n, phi> over Inflow facets of the test mesh."""
    mesh = test.mesh
    if mesh.tags is None:
        raise ValueError("weak form needs an Inflow/Outflow tagged mesh")
    facets = np.nonzero(mesh.tags == int(BoundaryTag.INFLOW))[0]
    if len(facets) == 0:
        return None, None, None
    pts, w = _facet_quadrature(mesh, facets, order)
    nf, nq, d = pts.shape
    owner = mesh.facet_cells[facets]
    normals = mesh.facet_normals()[facets]
    tcells = np.repeat(owner, nq)
    ucells = np.repeat(_ancestor(mesh, trial.mesh)[owner], nq)
    flat = pts.reshape(-1, d)
    phi, _, _ = evaluate_on_cells(test, tcells, flat)
    _, gpsi, _ = evaluate_on_cells(trial, ucells, flat)
    phi = phi.reshape(nf, nq, -1)
    dn = np.einsum("fqld,fd->fql", gpsi.reshape(nf, nq, -1, d), normals)
    loc = -eps * np.einsum("fq,fqi,fqj->fij", w, phi, dn)
    return loc, test.cell_dofs[owner], trial.cell_dofs[_ancestor(mesh, trial.mesh)[owner]]


def bilinear_matrix(trial: FunctionSpace, test: FunctionSpace, prob: ProblemDefinition,
                    mode: Optional[str] = None, order: Optional[int] = None):
    """Sparse matrix M with M[i, j] = B(psi_j, phi_i) over all dofs."""
    _check_pair(trial, test)
    mode = mode or prob.bc_mode
    if mode not in ("strong", "weak"):
        raise ValueError("mode must be 'strong' or 'weak'")
    order = order or default_order(test)
    quad = CellQuadrature(test.mesh, order)
    tv = tabulate(test, quad)
    tu = tabulate(trial, quad)
    w = quad.weights
    b = prob.b
    eps = prob.epsilon
    loc = eps * np.einsum("cq,cqid,cqjd->cij", w, tv.grads, tu.grads)
    if mode == "strong":
        bgv = np.einsum("cqid,d->cqi", tv.grads, b)
        loc -= np.einsum("cq,cqi,cqj->cij", w, bgv, tu.vals)
        react = prob.c - prob.div_b
    else:
        bgu = np.einsum("cqjd,d->cqj", tu.grads, b)
        loc += np.einsum("cq,cqi,cqj->cij", w, tv.vals, bgu)
        react = prob.c
    if react:
        loc += react * np.einsum("cq,cqi,cqj->cij", w, tv.vals, tu.vals)
    pat = ScatterPattern(tv.dofs, tu.dofs, (test.dim, trial.dim))
    M = pat.assemble(loc)
    if mode == "weak":
        floc, fr, fc = _inflow_flux_local(trial, test, eps, order)
        if floc is not None:
            M = M + ScatterPattern(fr, fc, M.shape).assemble(floc)
    return M.tocsr()


def load_vector(trial: FunctionSpace, test: FunctionSpace, prob: ProblemDefinition,
                mode: Optional[str] = None, order: Optional[int] = None, matrix=None):
    """Vector over all test dofs of (f, phi_i) - B(u_g, phi_i), u_g the trial lifting."""
    order = order or default_order(test)
    quad = CellQuadrature(test.mesh, order)
    tv = tabulate(test, quad)
    fq = np.asarray(prob.f(quad.points.reshape(-1, quad.points.shape[-1])), dtype=float)
    fq = fq.reshape(quad.weights.shape)
    loc = np.einsum("cq,cqi->ci", quad.weights * fq, tv.vals)
    rhs = np.bincount(tv.dofs.ravel(), weights=loc.ravel(), minlength=test.dim)
    if matrix is None:
        matrix = bilinear_matrix(trial, test, prob, mode, order)
    return rhs - matrix @ trial.lifting()


def b_eps(u: FieldFunction, v: FieldFunction, prob: ProblemDefinition, order=None) -> float:
    """B(u, v) in the strong-boundary-condition form."""
    M = bilinear_matrix(u.space, v.space, prob, "strong", order)
    return float(v.coeffs @ (M @ u.coeffs))


def b_eps_weak(u: FieldFunction, v: FieldFunction, prob: ProblemDefinition, order=None) -> float:
    """B(u, v) in the weakly imposed Inflow form (mesh must carry Inflow/Outflow tags)."""
    M = bilinear_matrix(u.space, v.space, prob, "weak", order)
    return float(v.coeffs @ (M @ u.coeffs))


def load(v: FieldFunction, prob: ProblemDefinition, trial: FunctionSpace, mode=None, order=None) -> float:
    """l(v) = (f, v) - B(u_g, v) with u_g the Dirichlet lifting in ``trial``."""
    return float(v.coeffs @ load_vector(trial, v.space, prob, mode, order))
