"""Best approximation in L^q and overshoot measurements.

The L^q projection is an independent reference for the Petrov-Galerkin
solutions: it shares only the function space and quadrature with them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fem import CellQuadrature, FieldFunction, FunctionSpace, ScatterPattern, _multi_indices, tabulate
from .metrics import write_table_csv
from .solver import NonConvergence

ETA_FLOOR = 1e-12
ETA_LAST = 1e-16

__all__ = [
    "ProjectionProblem",
    "lq_project",
    "l2_project",
    "optimality_residual",
    "overshoot_metrics",
    "sample_lattice",
    "write_overshoot_csv",
]


@dataclass
class ProjectionProblem:
    space: FunctionSpace
    target: Callable
    q: float
    eta: float = 0.0

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("q must lie in (1, inf)")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


class _Quad:
    def __init__(self, space, target, order):
        self.quad = CellQuadrature(space.mesh, order or 2 * space.degree + 4)
        self.tab = tabulate(space, self.quad)
        pts = self.quad.points.reshape(-1, space.mesh.dim)
        self.t = np.asarray(target(pts), dtype=float).reshape(self.quad.weights.shape)
        self.w = self.quad.weights
        self.space = space
        self.pattern = ScatterPattern(self.tab.dofs, self.tab.dofs, (space.dim, space.dim))

    def err(self, c):
        return np.einsum("cql,cl->cq", self.tab.vals, c[self.tab.dofs]) - self.t

    def vec(self, a):
        loc = np.einsum("cq,cql->cl", self.w * a, self.tab.vals)
        return np.bincount(self.tab.dofs.ravel(), weights=loc.ravel(), minlength=self.space.dim)

    def mat(self, a):
        V = self.tab.vals
        loc = np.matmul(np.swapaxes(V * (self.w * a)[..., None], 1, 2), V)
        return self.pattern.assemble(loc)


def _smoothed(e, q, eta):
    s = e * e + eta * eta
    f = s ** (0.5 * q)
    g = q * s ** (0.5 * q - 1.0) * e
    h = q * (s ** (0.5 * q - 1.0) + (q - 2.0) * s ** (0.5 * q - 2.0) * e * e)
    return f, g, h


def l2_project(space: FunctionSpace, target, order: Optional[int] = None) -> FieldFunction:
    """Mass-matrix projection with the space's Dirichlet values held fixed."""
    Q = _Quad(space, target, order)
    c = space.lifting()
    free = space.free_dofs
    M = Q.mat(np.ones_like(Q.w)).tocsr()
    rhs = -Q.vec(Q.err(c))[free]
    c[free] += splu(M[free][:, free].tocsc()).solve(rhs)
    return FieldFunction(space, c)


def optimality_residual(u: FieldFunction, target, q: float, order: Optional[int] = None) -> np.ndarray:
    """int |e|^(q-1) sgn(e) psi_j over free basis functions, e = u - target."""
    Q = _Quad(u.space, target, order)
    e = Q.err(u.coeffs)
    return Q.vec(np.sign(e) * np.abs(e) ** (q - 1.0))[u.space.free_dofs]


def _newton(Q, c, free, q, eta, tol, max_iter, history):
    """Damped Newton on the smoothed functional at fixed eta.

    Returns (gradient norm, status) with status "converged", "stalled" (no
    descent left at working precision) or "max_iter".
    """
    gn = np.inf
    for it in range(max_iter):
        f, g, h = _smoothed(Q.err(c), q, eta)
        grad = Q.vec(g)[free]
        gn = np.abs(grad).max()
        history.append((eta, it, gn))
        if gn <= 0.1 * tol:
            return gn, "converged"
        H = Q.mat(h).tocsr()[free][:, free].tocsc()
        d = splu(H).solve(-grad)
        F0 = float(np.sum(Q.w * f))
        slope = float(grad @ d)
        t = 1.0
        while t > 2.0 ** -40:
            ct = c.copy()
            ct[free] += t * d
            Ft = float(np.sum(Q.w * _smoothed(Q.err(ct), q, eta)[0]))
            if Ft <= F0 + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return gn, "stalled"
        c[:] = ct
        if np.abs(t * d).max() <= 1e-15 * max(np.abs(c).max(), 1.0):
            return gn, "stalled"
    return gn, "max_iter"


def lq_project(projp: ProjectionProblem, order: Optional[int] = None, tol: float = 1e-8,
               max_iter: int = 100, initial: Optional[np.ndarray] = None,
               certify: bool = True) -> FieldFunction:
    """Minimiser of ||u - target||_q over the space (Dirichlet values fixed).

    Newton on int (e^2 + eta^2)^(q/2) with eta decreased geometrically to
    ``max(projp.eta, ETA_FLOOR)``, starting from the L^2 projection or ``initial``.
    If the unsmoothed optimality certificate is still above ``tol`` there, eta
    is pushed further down to ``ETA_LAST`` before giving up.

    With ``certify=False`` the smoothed Newton iteration only has to converge
    or stall at working precision. That is
    the useful mode for q very close to 1: errors below the rounding unit of
    u - target then carry a large |e|^(q-1), and the unsmoothed certificate is
    out of reach in double precision.
    """
    space, q = projp.space, projp.q
    Q = _Quad(space, projp.target, order)
    free = space.free_dofs
    if initial is None:
        c = l2_project(space, projp.target, order).coeffs.copy()
    else:
        c = np.asarray(initial, dtype=float).copy()
        c[space.constrained_dofs] = space.constrained_values
    if q == 2.0 or len(free) == 0:
        return FieldFunction(space, c)

    def certificate():
        e = Q.err(c)
        return np.abs(Q.vec(np.sign(e) * np.abs(e) ** (q - 1.0))[free]).max()

    history = []
    eta_end = max(projp.eta, ETA_FLOOR)
    eta = max(np.abs(Q.err(c)).max(), eta_end)
    while True:
        gn, status = _newton(Q, c, free, q, eta, tol, max_iter, history)
        if eta <= eta_end:
            break
        eta = max(eta * 1e-2, eta_end)
    cert = certificate()
    if certify and projp.eta == 0.0:
        while cert > tol and eta > ETA_LAST:
            eta *= 1e-2
            gn, status = _newton(Q, c, free, q, eta, tol, max_iter, history)
            cert = certificate()
    u = FieldFunction(space, c)
    if certify and not cert <= tol:
        raise NonConvergence(f"L^q projection certificate {cert:.3e} above {tol:.1e}", last=u, history=history)
    if not certify and status == "max_iter":
        raise NonConvergence(f"smoothed L^q projection gradient {gn:.3e} after {max_iter} iterations",
                             last=u, history=history)
    return u


def sample_lattice(space: FunctionSpace, k: Optional[int] = None) -> np.ndarray:
    """Reference points of the order-k lattice (k+1 points per edge); k defaults to p+2."""
    k = space.degree + 2 if k is None else int(k)
    return np.array(_multi_indices(space.mesh.dim, k), dtype=float)[:, 1:] / k


def _lattice_values(f: FieldFunction, xi):
    vals, _ = f.space.element.eval(xi)
    return f.coeffs[f.space.cell_dofs] @ vals.T


def overshoot_metrics(u_h: FieldFunction, reference: FieldFunction, k: Optional[int] = None):
    """(max(u_h - reference), min(u_h)) over a lattice with p+3 points per cell edge."""
    if reference.space.mesh is not u_h.space.mesh:
        raise ValueError("u_h and reference must live on the same mesh")
    xi = sample_lattice(u_h.space, k)
    uh = _lattice_values(u_h, xi)
    ur = _lattice_values(reference, xi)
    return float((uh - ur).max()), float(uh.min())


def write_overshoot_csv(path, rows: Sequence) -> None:
    """Rows (q, max_over, min_under, method)."""
    write_table_csv(path, ["q", "max_over", "min_under", "method"], rows)
