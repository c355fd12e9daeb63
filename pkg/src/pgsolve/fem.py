"""Continuous Lagrange finite element spaces of arbitrary degree on simplices.

Local nodes are the equispaced lattice points of the reference simplex and the
basis is written in product form in barycentric coordinates, which keeps it
well conditioned for the degrees used here (up to about 12).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .mesh import BoundaryTag, Mesh, refine_uniform
from .quadrature import quadrature_rule

__all__ = [
    "LagrangeElement",
    "FunctionSpace",
    "FieldFunction",
    "build_space",
    "enrich_space",
    "interpolate",
    "transfer",
    "tabulate",
    "CellQuadrature",
    "ScatterPattern",
]


def _multi_indices(dim, p):
    out = []
    for a in product(range(p + 1), repeat=dim):
        if sum(a) <= p:
            out.append((p - sum(a),) + a)
    # vertices first, then the rest in lexicographic order
    verts = [tuple(p if k == j else 0 for k in range(dim + 1)) for j in range(dim + 1)]
    rest = sorted(set(out) - set(verts), key=lambda m: m[::-1])
    return verts + rest


class LagrangeElement:
    """Degree-``p`` Lagrange element on the reference interval or triangle."""

    def __init__(self, dim: int, p: int):
        if p < 1:
            raise ValueError("degree must be >= 1")
        self.dim = dim
        self.degree = p
        self.multi = np.array(_multi_indices(dim, p), dtype=int)
        self.nodes = self.multi[:, 1:] / p
        self.n_local = len(self.multi)

    def __repr__(self):
        return f"LagrangeElement(dim={self.dim}, p={self.degree})"

    def _factors(self, lam):
        # s_a(l) = prod_{m<a} (p l - m) / (m + 1) and its derivative, for a = 0..p
        p = self.degree
        npt = lam.shape[0]
        s = np.ones((p + 1, npt, lam.shape[1]))
        ds = np.zeros_like(s)
        for a in range(1, p + 1):
            fac = (p * lam - (a - 1)) / a
            s[a] = s[a - 1] * fac
            ds[a] = ds[a - 1] * fac + s[a - 1] * (p / a)
        return s, ds

    def eval(self, xi):
        """Basis values (npt, nloc) and reference gradients (npt, nloc, dim)."""
        xi = np.atleast_2d(xi)
        lam = np.column_stack([1.0 - xi.sum(axis=1), xi])
        s, ds = self._factors(lam)
        nb = self.dim + 1
        # per node and barycentric component: factor values
        F = np.stack([s[self.multi[:, k], :, k] for k in range(nb)], axis=-1)  # (nloc, npt, nb)
        dF = np.stack([ds[self.multi[:, k], :, k] for k in range(nb)], axis=-1)
        vals = F.prod(axis=-1)
        dlam = np.empty_like(F)
        for k in range(nb):
            others = np.delete(F, k, axis=-1).prod(axis=-1)
            dlam[..., k] = dF[..., k] * others
        # d/dxi_j = d/dlam_{j+1} - d/dlam_0
        grads = dlam[..., 1:] - dlam[..., :1]
        return vals.T, np.transpose(grads, (1, 0, 2))

    def facet_nodes(self, k):
        """Local nodes on the facet opposite local vertex ``k``."""
        return np.nonzero(self.multi[:, k] == 0)[0]


@dataclass(eq=False)
class FunctionSpace:
    mesh: Mesh
    degree: int
    element: LagrangeElement
    cell_dofs: np.ndarray
    nodes: np.ndarray
    constrained_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    constrained_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[self.constrained_dofs] = False
        return np.nonzero(mask)[0]

    def facet_dofs(self, facets=None) -> np.ndarray:
        """Dofs lying on the given boundary facets (default: all)."""
        m = self.mesh
        idx = np.arange(len(m.boundary_facets)) if facets is None else np.asarray(facets)
        out = []
        for f in idx:
            c = m.facet_cells[f]
            opposite = [k for k, v in enumerate(m.cells[c]) if v not in m.boundary_facets[f]][0]
            out.append(self.cell_dofs[c, self.element.facet_nodes(opposite)])
        if not out:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(out))

    def lifting(self) -> np.ndarray:
        """Coefficients equal to the Dirichlet values on constrained dofs, zero elsewhere."""
        c = np.zeros(self.dim)
        c[self.constrained_dofs] = self.constrained_values
        return c

    def __repr__(self):
        return f"FunctionSpace(p={self.degree}, dim={self.dim}, constrained={len(self.constrained_dofs)})"


@dataclass(eq=False)
class FieldFunction:
    space: FunctionSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dim,):
            raise ValueError("coefficient vector does not match the space dimension")

    def __call__(self, points):
        return evaluate(self, points)

    def gradient(self, points):
        return evaluate(self, points, grad=True)


@lru_cache(maxsize=None)
def get_element(dim: int, p: int) -> LagrangeElement:
    return LagrangeElement(dim, p)


def _dof_map(mesh: Mesh, elem: LagrangeElement):
    nv = mesh.n_vertices
    keys = {}
    cell_dofs = np.empty((mesh.n_cells, elem.n_local), dtype=np.int64)
    p = elem.degree
    next_id = nv
    nb = mesh.dim + 1
    for c, verts in enumerate(mesh.cells.tolist()):
        for l, a in enumerate(elem.multi.tolist()):
            nz = [k for k in range(nb) if a[k] > 0]
            if len(nz) == 1:
                cell_dofs[c, l] = verts[nz[0]]
                continue
            key = tuple(sorted((verts[k], a[k]) for k in nz))
            d = keys.get(key)
            if d is None:
                d = keys[key] = next_id
                next_id += 1
            cell_dofs[c, l] = d
    nodes = np.empty((next_id, mesh.dim))
    origin, jac = mesh.affine_maps()
    x = origin[:, None, :] + np.einsum("cij,lj->cli", jac, elem.nodes)
    nodes[cell_dofs.ravel()] = x.reshape(-1, mesh.dim)
    return cell_dofs, nodes


def _facet_selection(mesh: Mesh, tag):
    if isinstance(tag, str) and tag == "all":
        return np.arange(len(mesh.boundary_facets))
    if isinstance(tag, (BoundaryTag, int, np.integer)) and int(tag) in (0, 1):
        if mesh.tags is None:
            raise ValueError("boundary tag requested on an untagged mesh")
        return np.nonzero(mesh.tags == int(tag))[0]
    raise ValueError(f"unknown boundary tag {tag!r}")


def build_space(mesh: Mesh, p: int, dirichlet: Sequence = ()) -> FunctionSpace:
    """Continuous degree-``p`` Lagrange space with Dirichlet constraints.

    ``dirichlet`` is a list of ``(tag, g)`` with tag ``"all"`` or a
    :class:`BoundaryTag`; ``g`` is a callable of points (n, dim) or a constant.
    Later entries override earlier ones on shared dofs.
    """
    if p < 1:
        raise ValueError("degree must be >= 1")
    elem = get_element(mesh.dim, int(p))
    cell_dofs, nodes = _dof_map(mesh, elem)
    space = FunctionSpace(mesh, int(p), elem, cell_dofs, nodes)
    values = {}
    for tag, g in dirichlet:
        dofs = space.facet_dofs(_facet_selection(mesh, tag))
        vals = _evaluate_callable(g, nodes[dofs])
        values.update(zip(dofs.tolist(), vals.tolist()))
    if values:
        idx = np.array(sorted(values), dtype=np.int64)
        space.constrained_dofs = idx
        space.constrained_values = np.array([values[i] for i in idx.tolist()])
    return space


def _evaluate_callable(g, pts):
    if callable(g):
        return np.broadcast_to(np.asarray(g(pts), dtype=float), (len(pts),)).copy()
    return np.full(len(pts), float(g))


def enrich_space(space: FunctionSpace, delta_p: Optional[int] = None, levels: Optional[int] = None,
                 bc: str = "strong") -> FunctionSpace:
    """Test space V_m: degree raised by ``delta_p`` or mesh refined ``levels`` times.

    ``bc='strong'`` constrains V_m to zero on the whole boundary, ``bc='weak'``
    only on the Outflow facets.
    """
    if (delta_p is None) == (levels is None):
        raise ValueError("give exactly one of delta_p or levels")
    if delta_p is not None and delta_p < 1:
        raise ValueError("delta_p must be >= 1")
    if levels is not None and levels < 1:
        raise ValueError("levels must be >= 1")
    mesh = space.mesh
    p = space.degree
    if delta_p is not None:
        p = p + int(delta_p)
    else:
        for _ in range(int(levels)):
            mesh = refine_uniform(mesh)
    return _test_space(mesh, p, bc)


def _test_space(mesh, p, bc):
    if bc == "strong":
        return build_space(mesh, p, [("all", 0.0)])
    if bc == "weak":
        return build_space(mesh, p, [(BoundaryTag.OUTFLOW, 0.0)])
    raise ValueError(f"unknown bc mode {bc!r}")


def interpolate(space: FunctionSpace, g) -> FieldFunction:
    """Nodal interpolant of ``g`` (callable of points or constant)."""
    return FieldFunction(space, _evaluate_callable(g, space.nodes))


def reference_coords(mesh: Mesh, cells, points):
    origin, jac = mesh.affine_maps()
    inv = np.linalg.inv(jac[cells])
    return np.einsum("kij,kj->ki", inv, points - origin[cells])


def _ancestor(mesh: Mesh, target: Mesh):
    """Map from cells of ``mesh`` to cells of its ancestor ``target``."""
    idx = np.arange(mesh.n_cells)
    m = mesh
    while m is not target:
        if m.parent is None:
            raise ValueError("meshes are not nested")
        idx = m.parent[idx]
        m = m.coarse
    return idx


def evaluate_on_cells(space: FunctionSpace, cells, points):
    """Basis values (k, nloc), physical gradients (k, nloc, d) and dofs for points in cells."""
    cells = np.asarray(cells)
    xi = reference_coords(space.mesh, cells, points)
    vals, rgrads = space.element.eval(xi)
    _, jac = space.mesh.affine_maps()
    invT = np.transpose(np.linalg.inv(jac[cells]), (0, 2, 1))
    grads = np.einsum("kij,klj->kli", invT, rgrads)
    return vals, grads, space.cell_dofs[cells]


def evaluate(f: FieldFunction, points, grad=False, cells=None):
    pts = np.asarray(points, dtype=float).reshape(-1, f.space.mesh.dim)
    if cells is None:
        cells = f.space.mesh.locate(pts)
        if np.any(cells < 0):
            raise ValueError("point outside the mesh")
    vals, grads, dofs = evaluate_on_cells(f.space, cells, pts)
    c = f.coeffs[dofs]
    if grad:
        return np.einsum("kld,kl->kd", grads, c)
    return np.einsum("kl,kl->k", vals, c)


def transfer(f: FieldFunction, target: FunctionSpace) -> FieldFunction:
    """Represent ``f`` in ``target`` by nodal interpolation (exact for nested spaces)."""
    return FieldFunction(target, evaluate(f, target.nodes))


class CellQuadrature:
    """Quadrature points and scaled weights on every cell of a mesh."""

    def __init__(self, mesh: Mesh, order: int):
        self.mesh = mesh
        self.order = int(order)
        self.rule = quadrature_rule(mesh.dim, self.order)
        origin, jac = mesh.affine_maps()
        self.points = origin[:, None, :] + np.einsum("cij,qj->cqi", jac, self.rule.points)
        det = np.abs(np.linalg.det(jac))
        self.weights = det[:, None] * self.rule.weights[None, :]


@dataclass
class Tabulation:
    vals: np.ndarray  # (nc, nq, nloc), possibly a broadcast view
    grads: np.ndarray  # (nc, nq, nloc, d)
    dofs: np.ndarray  # (nc, nloc)


def tabulate(space: FunctionSpace, quad: CellQuadrature) -> Tabulation:
    """Basis of ``space`` at the quadrature points of ``quad``.

    The quadrature mesh must be the space's mesh or a uniform refinement of it.
    """
    qmesh = quad.mesh
    if qmesh is space.mesh:
        vals, rgrads = space.element.eval(quad.rule.points)
        _, jac = qmesh.affine_maps()
        invT = np.transpose(np.linalg.inv(jac), (0, 2, 1))
        grads = np.einsum("cij,qlj->cqli", invT, rgrads)
        nc = qmesh.n_cells
        return Tabulation(np.broadcast_to(vals, (nc,) + vals.shape), grads, space.cell_dofs)
    anc = _ancestor(qmesh, space.mesh)
    nc, nq, d = quad.points.shape
    cells = np.repeat(anc, nq)
    v, g, _ = evaluate_on_cells(space, cells, quad.points.reshape(-1, d))
    nloc = space.element.n_local
    return Tabulation(v.reshape(nc, nq, nloc), g.reshape(nc, nq, nloc, d), space.cell_dofs[anc])


class ScatterPattern:
    """Precomputed CSR structure for scattering cell matrices (nc, nr, ncol)."""

    def __init__(self, row_dofs, col_dofs, shape):
        self.shape = shape
        nc = row_dofs.shape[0]
        rows = np.broadcast_to(row_dofs[:, :, None], (nc, row_dofs.shape[1], col_dofs.shape[1])).ravel()
        cols = np.broadcast_to(col_dofs[:, None, :], (nc, row_dofs.shape[1], col_dofs.shape[1])).ravel()
        keys = rows.astype(np.int64) * shape[1] + cols
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.inverse = self.inverse.ravel()
        self.nnz = len(uniq)
        r = uniq // shape[1]
        c = uniq % shape[1]
        self.indices = c
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=shape[0]))])

    def assemble(self, local):
        data = np.bincount(self.inverse, weights=np.ascontiguousarray(local).ravel(), minlength=self.nnz)
        return csr_matrix((data, self.indices, self.indptr), shape=self.shape)
