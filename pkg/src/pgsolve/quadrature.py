"""Gauss quadrature on the reference interval [0, 1] and reference triangle.

Triangle rules are collapsed (Duffy) tensor products of Gauss-Jacobi and
Gauss-Legendre rules, so any order up to ``MAX_ORDER`` is available with
positive weights and interior points.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_ORDER = 60


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim) in the reference simplex
    weights: np.ndarray  # (nq,)
    order: int

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


def _gauss_01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def quadrature_rule(cell_dim, order):
    """Rule on the reference simplex exact for polynomials of total degree ``order``.

    The reference interval is [0, 1]; the reference triangle has vertices
    (0, 0), (1, 0), (0, 1).
    """
    order = int(order)
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    if order > MAX_ORDER:
        raise ValueError(f"quadrature order {order} above implemented maximum {MAX_ORDER}")
    n = order // 2 + 1
    if cell_dim == 1:
        x, w = _gauss_01(n)
        return QuadratureRule(x[:, None], w, order)
    if cell_dim == 2:
        # x = s, y = t (1 - s); the Jacobian (1 - s) is absorbed by the Jacobi weight
        xs, ws = roots_jacobi(n, 1.0, 0.0)
        s = 0.5 * (xs + 1.0)
        ws = 0.25 * ws
        t, wt = _gauss_01(n)
        S, T = np.meshgrid(s, t, indexing="ij")
        W = np.outer(ws, wt)
        pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
        return QuadratureRule(pts, W.ravel(), order)
    raise ValueError(f"unsupported cell dimension {cell_dim}")


def reference_measure(cell_dim):
    return 1.0 if cell_dim == 1 else 0.5
