"""Plain-text export of finite element fields."""
from __future__ import annotations

import csv

import numpy as np

from .fem import FieldFunction, evaluate
from .metrics import format_float

__all__ = ["uniform_points", "write_dofs", "write_samples"]


def uniform_points(dim: int, n: int) -> np.ndarray:
    """n equispaced points per direction on the unit interval or square."""
    t = np.linspace(0.0, 1.0, n)
    if dim == 1:
        return t[:, None]
    X, Y = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def write_dofs(path, f: FieldFunction) -> None:
    """One row ``dof, node coordinates, value`` per degree of freedom."""
    d = f.space.mesh.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dof"] + ["x", "y"][:d] + ["value"])
        for i, (x, v) in enumerate(zip(f.space.nodes, f.coeffs)):
            w.writerow([i] + [format_float(c) for c in x] + [format_float(v)])


def write_samples(path, fields: dict, n: int) -> None:
    """Values of several fields on a uniform lattice with ``n`` points per direction."""
    first = next(iter(fields.values()))
    d = first.space.mesh.dim
    pts = uniform_points(d, n)
    cols = {}
    for name, f in fields.items():
        cells = f.space.mesh.locate(pts, tol=1e-10)
        cols[name] = evaluate(f, pts, cells=cells)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"][:d] + list(fields))
        for k, p in enumerate(pts):
            w.writerow([format_float(c) for c in p] + [format_float(cols[name][k]) for name in fields])
