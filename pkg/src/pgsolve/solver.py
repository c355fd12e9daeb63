"""Damped Newton solver for the mixed residual-minimisation system.

Unknowns are the residual representative r_m in the test space and the
discrete solution u_n.  With J the duality map of the test norm,

    <J(r_m), v> + B(u_n, v) = l(v)   for v in V_m
    B(w, r_m)               = 0      for w in U_n

which is the optimality system of  min F(r) - l(r)  subject to B(w, r) = 0,
F(r) = ||r||^{q'} / q'.  Newton steps solve the linearised saddle point
system directly; the step length comes from a bracketing search on the
derivative of F - l along the step, so iterates stay on the constraint
set once they reach it.  Target exponents far from 2 are reached by
continuation in q starting from the linear q = 2 problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .duality import DualityForm, TestNormConfig
from .fem import FieldFunction, FunctionSpace, transfer
from .forms import bilinear_matrix, load_vector
from .problems import ProblemDefinition

__all__ = [
    "SolverConfig",
    "MixedSolution",
    "MixedSystem",
    "NonConvergence",
    "SingularLinearSystem",
    "assemble_system",
    "solve_mixed",
    "linear_solve",
    "continuation_schedule",
]


class SingularLinearSystem(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, msg, last=None, history=None):
        super().__init__(msg)
        self.last = last
        self.history = history or []


def continuation_schedule(q_target: float, stages: int = 8) -> List[float]:
    """q values from 2 to ``q_target``, geometric in q - 1."""
    if not q_target > 1:
        raise ValueError("q must lie in (1, inf)")
    if q_target == 2.0:
        return [2.0]
    a = q_target - 1.0
    return [2.0] + [1.0 + a ** (k / stages) for k in range(1, stages)] + [float(q_target)]


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 50
    backtrack: float = 0.5
    min_step: float = 2.0 ** -20
    stages: int = 8
    schedule: Optional[Sequence[float]] = None
    abs_floor: float = 1e-12
    # relative tolerance of the intermediate continuation stages
    stage_tol: float = 1e-6
    curvature: float = 0.25
    refine_steps: int = 8
    # relative lower bound on Hessian weights when q' > 2, see DualityForm.hessian
    hessian_floor: float = 1e-14
    # extra continuation stages inserted when a stage fails
    max_splits: int = 6

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    def schedule_for(self, q_target: float) -> List[float]:
        if self.schedule is None:
            return continuation_schedule(q_target, self.stages)
        s = [float(q) for q in self.schedule]
        if not s or s[0] != 2.0 or s[-1] != float(q_target):
            raise ValueError("continuation schedule must start at 2 and end at the target q")
        return s


@dataclass
class MixedSolution:
    u_n: FieldFunction
    r_m: FieldFunction
    newton_iterations: int
    residual_norm: float
    q: float
    history: list = field(default_factory=list, repr=False)
    stage_iterations: list = field(default_factory=list)


def linear_solve(A, b, rtol: float = 1e-10, max_refine: int = 5) -> np.ndarray:
    """Sparse LU with partial pivoting, row/column equilibration and iterative refinement."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    rmax = abs(A).max(axis=1).toarray().ravel()
    if np.any(rmax == 0):
        raise SingularLinearSystem(f"singular matrix: zero row {int(np.argmin(rmax))}")
    Dr = sp.diags(1.0 / rmax)
    As = Dr @ A
    cmax = abs(As).max(axis=0).toarray().ravel()
    if np.any(cmax == 0):
        raise SingularLinearSystem(f"singular matrix: zero column {int(np.argmin(cmax))}")
    dc = 1.0 / cmax
    As = sp.csc_matrix(As @ sp.diags(dc))
    try:
        lu = splu(As, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as err:
        raise SingularLinearSystem(f"sparse factorization failed: {err}") from None
    udiag = lu.U.diagonal()
    if np.any(udiag == 0) or not np.all(np.isfinite(udiag)):
        k = int(np.nonzero((udiag == 0) | ~np.isfinite(udiag))[0][0])
        raise SingularLinearSystem(f"zero pivot at column {int(lu.perm_c[k])}")
    solve = lambda rhs: dc * lu.solve(rhs / rmax)
    x = solve(b)
    bn = np.abs(b).max()
    if bn == 0:
        return x
    for _ in range(max_refine):
        res = b - A @ x
        if np.abs(res).max() <= rtol * bn:
            break
        x = x + solve(res)
    return x


class MixedSystem:
    """Discrete mixed system on a trial/test space pair, restricted to free dofs."""

    def __init__(self, prob: ProblemDefinition, trial: FunctionSpace, test: FunctionSpace,
                 norm: TestNormConfig, order: Optional[int] = None):
        self.prob, self.trial, self.test = prob, trial, test
        self.fu = trial.free_dofs
        self.fv = test.free_dofs
        if len(self.fv) < len(self.fu):
            raise ValueError(f"test space too small: {len(self.fv)} free test dofs < {len(self.fu)} trial dofs")
        M = bilinear_matrix(trial, test, prob, order=order)
        self.L = load_vector(trial, test, prob, order=order, matrix=M)[self.fv]
        self.B = M[self.fv][:, self.fu].tocsr()
        self.BT = self.B.T.tocsr()
        self.form = DualityForm(test, norm, order)
        self.l_norm = float(np.abs(self.L).max()) if self.L.size else 0.0

    @property
    def shape(self):
        return len(self.fv), len(self.fu)

    def full_r(self, R):
        c = np.zeros(self.test.dim)
        c[self.fv] = R
        return c

    def full_u(self, U):
        c = self.trial.lifting()
        c[self.fu] = U
        return c

    def J(self, form, R):
        return form.residual(self.full_r(R))[self.fv]

    def H(self, form, R, floor=0.0):
        return form.hessian(self.full_r(R), floor)[self.fv][:, self.fv]

    def energy(self, form, R):
        return form.energy(self.full_r(R)) - float(self.L @ R)

    def residual(self, form, R, U):
        return np.concatenate([self.J(form, R) + self.B @ U - self.L, self.BT @ R])

    def jacobian(self, form, R, floor=0.0):
        return sp.bmat([[self.H(form, R, floor), self.B], [self.BT, None]], format="csc")

    def fields(self, R, U):
        return FieldFunction(self.trial, self.full_u(U)), FieldFunction(self.test, self.full_r(R))


def assemble_system(state, trial: FunctionSpace, test: FunctionSpace, prob: ProblemDefinition,
                    norm: TestNormConfig, order=None):
    """Block residual [F_V; F_U] and Jacobian [[dJ, B], [B^T, 0]] over free dofs.

    ``state`` is a pair (r_m, u_n) of FieldFunction; the lifting of u_n is
    taken from the trial space constraints.
    """
    r, u = state
    sysm = MixedSystem(prob, trial, test, norm, order)
    R = r.coeffs[sysm.fv]
    U = u.coeffs[sysm.fu]
    return sysm.residual(sysm.form, R, U), sysm.jacobian(sysm.form, R)


def _rescale(sysm, form, R):
    """Scale R along its ray so that <J(R), R> = l(R); keeps feasibility."""
    num = float(sysm.L @ R)
    den = float(sysm.J(form, R) @ R)
    if num <= 0 or den <= 0 or not np.isfinite(den):
        return R
    e = form.cfg.q_dual - 1.0
    return R * (num / den) ** (1.0 / e)


def _project_feasible(sysm, R):
    BT = sysm.BT
    G = (BT @ sysm.B).tocsc()
    return R - sysm.B @ linear_solve(G, BT @ R)


def _line_search(sysm, form, R, dR, slope0, cfg):
    """Step length along dR for the convex energy, from its monotone derivative.

    Halves t from 1 until the derivative is non-positive, then refines
    inside the bracket until |phi'(t)| <= curvature * |phi'(0)|.  Returns
    (0, R) when dR is not a descent direction.
    """
    if not slope0 < 0:
        return 0.0, R
    def dphi(t):
        with np.errstate(over="ignore", invalid="ignore"):
            d = float((sysm.J(form, R + t * dR) - sysm.L) @ dR)
        # overflow only happens far past the minimiser
        return d if np.isfinite(d) else np.inf

    t, d = 1.0, dphi(1.0)
    if d <= cfg.curvature * abs(slope0):
        return 1.0, R + dR
    hi = 1.0
    while d > 0:
        hi = t
        t *= cfg.backtrack
        if t < cfg.min_step:
            return 0.0, R
        d = dphi(t)
    lo = t
    for _ in range(cfg.refine_steps):
        if abs(d) <= cfg.curvature * abs(slope0):
            break
        mid = 0.5 * (lo + hi)
        dm = dphi(mid)
        if dm <= 0:
            lo, d = mid, dm
        else:
            hi = mid
    return lo, R + lo * dR


def _newton_stage(sysm, form, R, U, cfg, stage, history, log, tol=None):
    q = form.cfg.q
    n_r = len(R)
    res_vec = sysm.residual(form, R, U)
    res = float(np.abs(res_vec).max())
    scale = max(res, sysm.l_norm)
    target = (cfg.tol if tol is None else tol) * scale + cfg.abs_floor

    def record(it, r, t):
        history.append((stage, q, it, r, t))
        if log is not None:
            log.write(f"{stage} {q:.17g} {it} {r:.17g} {t:.17g}\n")

    record(0, res, 0.0)
    for it in range(1, cfg.max_iter + 1):
        if res <= target:
            return R, U, it - 1, res
        K = sysm.jacobian(form, R, cfg.hessian_floor)
        g = sysm.J(form, R) - sysm.L
        rhs = np.concatenate([-g, -(sysm.BT @ R)])
        sol = linear_solve(K, rhs)
        dR, U_new = sol[:n_r], sol[n_r:]
        t, Rt = _line_search(sysm, form, R, dR, float(g @ dR), cfg)
        if t == 0.0:
            # no descent detectable; accept a step only if it reduces the residual
            t = 1.0
            while t >= cfg.min_step:
                Rt = R + t * dR
                rt = float(np.abs(sysm.residual(form, Rt, U + t * (U_new - U))).max())
                if rt < res:
                    break
                t *= cfg.backtrack
            else:
                record(it, res, 0.0)
                raise NonConvergence(f"step underflow at q={q:g}, iteration {it}",
                                     last=sysm.fields(R, U), history=history)
        R = Rt
        U = U + t * (U_new - U)
        res = float(np.abs(sysm.residual(form, R, U)).max())
        record(it, res, t)
    if res <= target:
        return R, U, cfg.max_iter, res
    raise NonConvergence(f"no convergence at q={q:g} after {cfg.max_iter} iterations (residual {res:.3e})",
                         last=sysm.fields(R, U), history=history)


def solve_mixed(prob: ProblemDefinition, trial: FunctionSpace, test: FunctionSpace,
                norm: TestNormConfig, cfg: Optional[SolverConfig] = None, *,
                initial=None, order: Optional[int] = None, log: Optional[TextIO] = None,
                system: Optional[MixedSystem] = None) -> MixedSolution:
    """Solve the mixed system at ``norm.q`` by continuation from q = 2.

    ``initial`` = (r, u) FieldFunctions (possibly on coarser nested spaces)
    replaces the continuation by a single Newton stage at the target q.
    ``log`` receives one ``stage q iter residual step_length`` line per step.
    """
    cfg = cfg or SolverConfig()
    sysm = system or MixedSystem(prob, trial, test, norm, order)
    q_target = norm.q
    history: list = []
    stage_its = []
    if initial is not None:
        r0, u0 = initial
        R = transfer(r0, test).coeffs[sysm.fv] if r0.space is not test else r0.coeffs[sysm.fv]
        U = transfer(u0, trial).coeffs[sysm.fu] if u0.space is not trial else u0.coeffs[sysm.fu]
        R = _project_feasible(sysm, R)
        schedule = [q_target]
    else:
        R = np.zeros(sysm.shape[0])
        U = np.zeros(sysm.shape[1])
        schedule = cfg.schedule_for(q_target)
    total = 0
    res = np.inf
    pending = list(schedule)
    q_prev = None
    splits = 0
    k = 0
    while pending:
        q = pending[0]
        form = sysm.form.with_q(q)
        R0, U0 = R, U
        if q_prev is not None or initial is not None:
            R = _rescale(sysm, form, R)
        tol = cfg.tol if len(pending) == 1 else max(cfg.stage_tol, cfg.tol)
        try:
            R, U, its, res = _newton_stage(sysm, form, R, U, cfg, k, history, log, tol)
        except (NonConvergence, SingularLinearSystem) as err:
            # retry through an intermediate exponent, geometric in q - 1
            if q_prev is None or splits >= cfg.max_splits:
                if isinstance(err, NonConvergence):
                    err.history = history
                raise
            splits += 1
            R, U = R0, U0
            pending.insert(0, 1.0 + math.sqrt((q_prev - 1.0) * (q - 1.0)))
            k += 1
            continue
        pending.pop(0)
        q_prev = q
        stage_its.append(its)
        total += its
        k += 1
    u, r = sysm.fields(R, U)
    return MixedSolution(u, r, total, res, q_target, history, stage_its)
