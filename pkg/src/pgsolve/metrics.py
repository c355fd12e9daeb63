"""Error norms, convergence orders and CSV tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .fem import CellQuadrature, FieldFunction, tabulate
from .mesh import refine_uniform

__all__ = [
    "lq_error",
    "w1q_error",
    "ConvergenceTable",
    "estimate_eoc",
    "write_table_csv",
    "format_float",
]


def format_float(x) -> str:
    return f"{float(x):.17g}"


def _error_quadrature(u: FieldFunction, order, subdivide):
    mesh = u.space.mesh
    for _ in range(subdivide):
        mesh = refine_uniform(mesh)
    quad = CellQuadrature(mesh, order or 2 * u.space.degree + 4)
    return quad, tabulate(u.space, quad)


def lq_error(u_n: FieldFunction, exact, q: float, order: Optional[int] = None, subdivide: int = 0) -> float:
    """(int |u_n - exact|^q)^(1/q); ``exact`` is a callable of points or a constant.

    ``subdivide`` > 0 integrates on uniformly refined copies of the mesh,
    useful when ``exact`` has layers thinner than a cell.
    """
    quad, tab = _error_quadrature(u_n, order, subdivide)
    pts = quad.points.reshape(-1, quad.points.shape[-1])
    uh = np.einsum("cql,cl->cq", tab.vals, u_n.coeffs[tab.dofs])
    ex = exact(pts).reshape(uh.shape) if callable(exact) else np.full(uh.shape, float(exact))
    return float(np.sum(quad.weights * np.abs(uh - ex) ** q) ** (1.0 / q))


def w1q_error(u_n: FieldFunction, exact_grad, q: float, order: Optional[int] = None, subdivide: int = 0) -> float:
    """(sum_i int |d_i(u_n - exact)|^q)^(1/q); ``exact_grad`` returns (npts, dim)."""
    quad, tab = _error_quadrature(u_n, order, subdivide)
    d = quad.points.shape[-1]
    pts = quad.points.reshape(-1, d)
    gh = np.einsum("cqld,cl->cqd", tab.grads, u_n.coeffs[tab.dofs])
    if callable(exact_grad):
        ge = np.asarray(exact_grad(pts), dtype=float).reshape(gh.shape)
    else:
        ge = np.broadcast_to(np.asarray(exact_grad, dtype=float), gh.shape)
    return float(np.sum(quad.weights[..., None] * np.abs(gh - ge) ** q) ** (1.0 / q))


def estimate_eoc(h: Sequence[float], errors: Sequence[float]) -> List[float]:
    """Orders log(e_{i-1}/e_i) / log(h_{i-1}/h_i) for i >= 1."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(h) < 2 or len(h) != len(e):
        raise ValueError("need at least two (h, error) pairs")
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))


@dataclass
class ConvergenceTable:
    """Rows (h, dofs, error_Lq, error_W1q) with orders from the second row on."""
    h: List[float] = field(default_factory=list)
    dofs: List[int] = field(default_factory=list)
    error_lq: List[float] = field(default_factory=list)
    error_w1q: List[float] = field(default_factory=list)

    def add(self, h, dofs, e_lq, e_w1q=np.nan):
        if self.h and not h < self.h[-1]:
            raise ValueError("h must be strictly decreasing")
        self.h.append(float(h))
        self.dofs.append(int(dofs))
        self.error_lq.append(float(e_lq))
        self.error_w1q.append(float(e_w1q))

    def __len__(self):
        return len(self.h)

    @property
    def eoc_lq(self):
        return [np.nan] + estimate_eoc(self.h, self.error_lq)

    @property
    def eoc_w1q(self):
        return [np.nan] + estimate_eoc(self.h, self.error_w1q)

    def final_rates(self):
        if len(self) < 2:
            raise ValueError("need at least two rows")
        return self.eoc_lq[-1], self.eoc_w1q[-1]

    def rows(self):
        el, ew = (self.eoc_lq, self.eoc_w1q) if len(self) > 1 else ([np.nan], [np.nan])
        return list(zip(self.h, self.dofs, self.error_lq, self.error_w1q, el, ew))

    def to_csv(self, path):
        write_table_csv(path, ["h", "dofs", "error_Lq", "error_W1q", "eoc_Lq", "eoc_W1q"], self.rows())


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
