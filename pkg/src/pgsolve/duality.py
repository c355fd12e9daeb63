"""Duality mappings of weight t^(s-1) on L^s and on the weighted W^{1,q'} test norm.

The test norm on V_m is

    ||v||^{q'} = alpha ||v||_{q'}^{q'} + eps sum_i ||d_i v||_{q'}^{q'}
                 + |Omega|^{1/2} / ||b||_inf  ||omega^{1/q'} b.grad v||_{q'}^{q'}

and its duality map is the gradient of ||v||^{q'} / q'.  :class:`DualityForm`
evaluates that map, its Jacobian and the potential for coefficient vectors;
the module-level functions are the scalar forms on :class:`FieldFunction`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .fem import CellQuadrature, FieldFunction, FunctionSpace, ScatterPattern, tabulate

__all__ = [
    "TestNormConfig",
    "DualityForm",
    "signed_power",
    "abs_power",
    "jq_pairing",
    "jV_residual",
    "jV_gateaux",
    "dual_norm_identities_check",
    "normalized_jq_pairing",
]

POWER_CAP = 1e300


def abs_power(t, e):
    """|t|^e with overflow capped at POWER_CAP; 0^0 = 1."""
    if e == 0:
        return np.ones_like(t)
    if e == 1:
        return np.abs(t)
    with np.errstate(over="ignore", under="ignore"):
        return np.minimum(np.abs(t) ** e, POWER_CAP)


def signed_power(t, e):
    """sgn(t) |t|^e with sgn(0) = 0."""
    if e == 1:
        return np.asarray(t, dtype=float)
    return np.sign(t) * abs_power(t, e)


_OMEGAS = {
    "zero": lambda x, eps: np.zeros(x.shape[:-1]),
    "one": lambda x, eps: np.ones(x.shape[:-1]),
    "inflow_distance": lambda x, eps: x[..., 0] + eps,
}


@dataclass(frozen=True)
class TestNormConfig:
    """Parameters of the test norm; ``q`` is the trial exponent."""
    __test__ = False  # not a pytest class despite the name

    q: float
    epsilon: float
    alpha: float = 1.0
    omega: Union[str, Callable] = "one"
    b: tuple = (1.0,)
    domain_measure: float = 1.0
    regularization: float = 1e-10

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("q must lie in (1, inf)")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if isinstance(self.omega, str) and self.omega not in _OMEGAS:
            raise ValueError(f"unknown omega variant {self.omega!r}")
        object.__setattr__(self, "b", tuple(float(c) for c in np.atleast_1d(self.b)))

    @property
    def q_dual(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def domain_factor(self) -> float:
        bn = np.linalg.norm(self.b)
        return np.sqrt(self.domain_measure) / bn if bn > 0 else 0.0

    def with_q(self, q) -> "TestNormConfig":
        return replace(self, q=float(q))

    def omega_values(self, x):
        if callable(self.omega):
            return np.asarray(self.omega(x), dtype=float)
        return _OMEGAS[self.omega](x, self.epsilon)


def _hess_weight(t, qd, delta_rel, floor=0.0):
    e = qd - 2.0
    if e >= 0:
        w = abs_power(t, e)
        if floor > 0 and w.size:
            w = np.maximum(w, floor * w.max())
        return w
    scale = np.abs(t).max() if t.size else 0.0
    delta = delta_rel * (scale if scale > 0 else 1.0)
    with np.errstate(over="ignore"):
        return np.minimum((t * t + delta * delta) ** (0.5 * e), POWER_CAP)


class DualityForm:
    """Vectorised evaluation of the test-norm duality map on one space."""

    def __init__(self, space: FunctionSpace, cfg: TestNormConfig, order: Optional[int] = None):
        self.space = space
        self.cfg = cfg
        self.order = int(order) if order is not None else 2 * space.degree + 2
        self.quad = CellQuadrature(space.mesh, self.order)
        self.tab = tabulate(space, self.quad)
        b = np.asarray(cfg.b, dtype=float)
        if b.shape != (space.mesh.dim,):
            raise ValueError("velocity dimension does not match the mesh")
        self.bgrads = np.einsum("cqld,d->cql", self.tab.grads, b)
        self.omega = np.broadcast_to(cfg.omega_values(self.quad.points), self.quad.weights.shape)
        self.pattern = ScatterPattern(self.tab.dofs, self.tab.dofs, (space.dim, space.dim))
        self._w_omega = self.quad.weights * self.omega * cfg.domain_factor
        self._use_omega = bool(np.any(self._w_omega != 0))

    def with_q(self, q) -> "DualityForm":
        new = object.__new__(DualityForm)
        new.__dict__.update(self.__dict__)
        new.cfg = self.cfg.with_q(q)
        return new

    def fields(self, coeffs):
        c = np.asarray(coeffs)[self.tab.dofs]
        val = np.einsum("cql,cl->cq", self.tab.vals, c)
        grad = np.einsum("cqld,cl->cqd", self.tab.grads, c)
        bgrad = np.einsum("cql,cl->cq", self.bgrads, c)
        return val, grad, bgrad

    def _scatter_vec(self, local):
        return np.bincount(self.tab.dofs.ravel(), weights=local.ravel(), minlength=self.space.dim)

    def residual(self, coeffs) -> np.ndarray:
        """Vector of <J(r), phi_i> over all basis functions of the space."""
        cfg = self.cfg
        e = cfg.q_dual - 1.0
        val, grad, bgrad = self.fields(coeffs)
        w = self.quad.weights
        loc = np.zeros(self.tab.dofs.shape)
        if cfg.alpha:
            loc += np.einsum("cq,cql->cl", cfg.alpha * w * signed_power(val, e), self.tab.vals)
        loc += np.einsum("cqd,cqld->cl", cfg.epsilon * w[..., None] * signed_power(grad, e), self.tab.grads)
        if self._use_omega:
            loc += np.einsum("cq,cql->cl", self._w_omega * signed_power(bgrad, e), self.bgrads)
        return self._scatter_vec(loc)

    def energy(self, coeffs) -> float:
        """Potential ||r||^{q'} / q' whose gradient is :meth:`residual`."""
        cfg = self.cfg
        qd = cfg.q_dual
        val, grad, bgrad = self.fields(coeffs)
        w = self.quad.weights
        tot = cfg.epsilon * np.sum(w[..., None] * abs_power(grad, qd))
        if cfg.alpha:
            tot += cfg.alpha * np.sum(w * abs_power(val, qd))
        if self._use_omega:
            tot += np.sum(self._w_omega * abs_power(bgrad, qd))
        return float(min(tot / qd, np.inf))

    def hessian(self, coeffs, floor: float = 0.0):
        """Sparse Jacobian of :meth:`residual` (regularised when q' < 2).

        ``floor`` > 0 bounds the weights of each term below by that fraction
        of their maximum when q' > 2; the result is then a positive definite
        approximation of the Jacobian rather than the Jacobian itself.
        """
        cfg = self.cfg
        qd = cfg.q_dual
        k = qd - 1.0
        d = cfg.regularization
        val, grad, bgrad = self.fields(coeffs)
        w = self.quad.weights
        V, G, BG = self.tab.vals, self.tab.grads, self.bgrads
        loc = np.zeros(self.tab.dofs.shape + (self.tab.dofs.shape[1],))
        if cfg.alpha:
            a = cfg.alpha * k * w * _hess_weight(val, qd, d, floor)
            loc += np.matmul(np.swapaxes(V * a[..., None], 1, 2), V)
        for i in range(G.shape[-1]):
            a = cfg.epsilon * k * w * _hess_weight(grad[..., i], qd, d, floor)
            Gi = G[..., i]
            loc += np.matmul(np.swapaxes(Gi * a[..., None], 1, 2), Gi)
        if self._use_omega:
            a = k * self._w_omega * _hess_weight(bgrad, qd, d, floor)
            loc += np.matmul(np.swapaxes(BG * a[..., None], 1, 2), BG)
        return self.pattern.assemble(loc)


def _check_same_space(*fields):
    s = fields[0].space
    for f in fields[1:]:
        if f.space.mesh is not s.mesh:
            raise ValueError("fields live on different meshes")
        if f.space is not s and f.space.degree != s.degree:
            raise ValueError("fields live in different spaces")


def jq_pairing(v: FieldFunction, w: FieldFunction, q: float, order: Optional[int] = None) -> float:
    """Integral of |v|^(q-1) sgn(v) w."""
    _check_same_space(v, w)
    if not q > 1:
        raise ValueError("q must lie in (1, inf)")
    sp = v.space
    quad = CellQuadrature(sp.mesh, order or 2 * sp.degree + 2)
    tab = tabulate(sp, quad)
    vv = np.einsum("cql,cl->cq", tab.vals, v.coeffs[tab.dofs])
    wv = np.einsum("cql,cl->cq", tab.vals, w.coeffs[w.space.cell_dofs])
    return float(np.sum(quad.weights * signed_power(vv, q - 1.0) * wv))


def normalized_jq_pairing(v: FieldFunction, w: FieldFunction, q: float, order: Optional[int] = None) -> float:
    """Normalised duality map (weight t): ||v||_q^(2-q) times :func:`jq_pairing`."""
    nrm = jq_pairing(v, v, q, order) ** (1.0 / q)
    return nrm ** (2.0 - q) * jq_pairing(v, w, q, order)


def jV_residual(r: FieldFunction, w: FieldFunction, cfg: TestNormConfig, order=None) -> float:
    _check_same_space(r, w)
    return float(DualityForm(r.space, cfg, order).residual(r.coeffs) @ w.coeffs)


def jV_gateaux(r: FieldFunction, z: FieldFunction, w: FieldFunction, cfg: TestNormConfig, order=None) -> float:
    """Derivative of jV_residual(r, w) in r along z."""
    _check_same_space(r, z, w)
    H = DualityForm(r.space, cfg, order).hessian(r.coeffs)
    return float(w.coeffs @ (H @ z.coeffs))


def dual_norm_identities_check(v: FieldFunction, q: float, order=None):
    """Return (||J_q v||_{q'}, ||v||_q^(q-1)) computed independently by quadrature."""
    if not np.any(v.coeffs):
        raise ValueError("v must be nonzero")
    sp = v.space
    quad = CellQuadrature(sp.mesh, order or 2 * sp.degree + 2)
    tab = tabulate(sp, quad)
    vv = np.einsum("cql,cl->cq", tab.vals, v.coeffs[tab.dofs])
    qd = q / (q - 1.0)
    jv = signed_power(vv, q - 1.0)
    lhs = np.sum(quad.weights * np.abs(jv) ** qd) ** (1.0 / qd)
    rhs = np.sum(quad.weights * np.abs(vv) ** q) ** ((q - 1.0) / q)
    return float(lhs), float(rhs)
