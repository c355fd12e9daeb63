"""Simplicial meshes of the unit interval and unit square.

A :class:`Mesh` stores vertex coordinates, positively oriented cells and the
boundary facets, optionally tagged as inflow/outflow for a velocity field.
Meshes are treated as immutable; every operation returns a new mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "BoundaryTag",
    "Mesh",
    "build_interval_mesh",
    "build_unit_square_mesh",
    "build_corner_modified_mesh",
    "build_interior_layer_mesh",
    "classify_boundary",
    "patch_area_ratio",
    "refine_uniform",
    "nearest_interior_vertex",
    "write_mesh",
    "read_mesh",
    "PATTERNS",
]

PATTERNS = ("M1", "M2", "M3", "M4")

# shift of the last interior grid line toward the outflow boundary, in units of h;
# leaves the boundary-touching part of the corner patch at 96/196 of its area
CORNER_SHIFT = 4.0 / 7.0


class BoundaryTag(IntEnum):
    INFLOW = 0
    OUTFLOW = 1


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray = None
    tags: Optional[np.ndarray] = None
    parent: Optional[np.ndarray] = None
    coarse: Optional["Mesh"] = field(default=None, repr=False)
    facet_cells: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        verts = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if verts.shape[0] == 1 and verts.shape[1] > 1 and np.asarray(self.cells).shape[1] == 2:
            verts = verts.T
        cells = np.array(self.cells, dtype=np.int64)
        cells = _orient(verts, cells)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", cells)
        facets, owners = _boundary_facets(cells)
        if self.boundary_facets is None:
            object.__setattr__(self, "boundary_facets", facets)
            object.__setattr__(self, "facet_cells", owners)
        else:
            given = np.array(self.boundary_facets, dtype=np.int64).reshape(-1, cells.shape[1] - 1)
            lookup = {tuple(sorted(f)): c for f, c in zip(facets.tolist(), owners.tolist())}
            try:
                own = np.array([lookup[tuple(sorted(f))] for f in given.tolist()], dtype=np.int64)
            except KeyError as exc:
                raise ValueError(f"facet {exc.args[0]} is not a boundary facet") from None
            object.__setattr__(self, "boundary_facets", given)
            object.__setattr__(self, "facet_cells", own)
        if self.tags is not None:
            tags = np.asarray(self.tags, dtype=np.int8)
            if tags.shape != (len(self.boundary_facets),):
                raise ValueError("one tag per boundary facet required")
            object.__setattr__(self, "tags", tags)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def is_tagged(self) -> bool:
        return self.tags is not None

    def affine_maps(self):
        """Return (origin, jacobian) with x = origin + jacobian @ xi per cell."""
        v = self.vertices[self.cells]
        origin = v[:, 0, :]
        jac = np.transpose(v[:, 1:, :] - origin[:, None, :], (0, 2, 1))
        return origin, jac

    def cell_measures(self) -> np.ndarray:
        _, jac = self.affine_maps()
        if self.dim == 1:
            return jac[:, 0, 0].copy()
        # explicit 2x2 determinant: exact on dyadic grids, unlike an LU-based det
        return 0.5 * (jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0])

    def edges(self) -> np.ndarray:
        """Unique sorted vertex pairs; for 1D the cells themselves."""
        if self.dim == 1:
            return np.sort(self.cells, axis=1)
        e = np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def facet_midpoints(self) -> np.ndarray:
        return self.vertices[self.boundary_facets].mean(axis=1)

    def facet_normals(self) -> np.ndarray:
        """Unit outward normals of the boundary facets (centroid test)."""
        cent = self.vertices[self.cells[self.facet_cells]].mean(axis=1)
        mid = self.facet_midpoints()
        if self.dim == 1:
            n = np.sign(mid - cent)
        else:
            t = self.vertices[self.boundary_facets[:, 1]] - self.vertices[self.boundary_facets[:, 0]]
            n = np.column_stack([t[:, 1], -t[:, 0]])
            n /= np.linalg.norm(n, axis=1)[:, None]
            flip = np.einsum("fd,fd->f", n, mid - cent) < 0
            n[flip] *= -1
        return n

    def facet_measures(self) -> np.ndarray:
        if self.dim == 1:
            return np.ones(len(self.boundary_facets))
        v = self.vertices[self.boundary_facets]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    def boundary_vertices(self, tag=None) -> np.ndarray:
        facets = self.boundary_facets
        if tag is not None:
            if self.tags is None:
                raise ValueError("mesh has no boundary tags")
            facets = facets[self.tags == int(tag)]
        return np.unique(facets)

    def with_tags(self, tags) -> "Mesh":
        return replace(self, tags=np.asarray(tags, dtype=np.int8))

    def locate(self, points, tol=1e-12) -> np.ndarray:
        """Index of a cell containing each point (-1 if outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            pts = pts.reshape(-1, self.dim)
        origin, jac = self.affine_maps()
        inv = np.linalg.inv(jac)
        out = np.full(len(pts), -1, dtype=np.int64)
        if self.n_cells > 64:
            # candidate cells from the nearest centroids, then exact test
            cent = self.vertices[self.cells].mean(axis=1)
            k = min(12, self.n_cells)
            _, cand = cKDTree(cent).query(pts, k=k)
            xi = np.einsum("pkij,pkj->pki", inv[cand], pts[:, None, :] - origin[cand])
            lam0 = 1.0 - xi.sum(axis=2)
            inside = (xi >= -tol).all(axis=2) & (lam0 >= -tol)
            found = inside.any(axis=1)
            out[found] = cand[found, inside[found].argmax(axis=1)]
            rest = np.nonzero(~found)[0]
        else:
            rest = np.arange(len(pts))
        chunk = max(1, 2_000_000 // max(self.n_cells, 1))
        for s in range(0, len(rest), chunk):
            idx = rest[s:s + chunk]
            p = pts[idx]
            xi = np.einsum("cij,pcj->pci", inv, p[:, None, :] - origin[None])
            lam0 = 1.0 - xi.sum(axis=2)
            inside = (xi >= -tol).all(axis=2) & (lam0 >= -tol)
            found = inside.any(axis=1)
            out[idx[found]] = inside[found].argmax(axis=1)
        return out


def _orient(verts, cells):
    cells = cells.copy()
    if cells.shape[1] == 2:
        bad = verts[cells[:, 1], 0] < verts[cells[:, 0], 0]
        cells[bad] = cells[bad][:, ::-1]
        return cells
    v = verts[cells]
    area = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1])
    bad = area < 0
    cells[bad] = cells[bad][:, [0, 2, 1]]
    return cells


def _boundary_facets(cells):
    nloc = cells.shape[1]
    if nloc == 2:
        faces = [cells[:, [1]], cells[:, [0]]]
    else:
        faces = [cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]]
    allf = np.concatenate(faces)
    owner = np.tile(np.arange(len(cells)), nloc)
    key = np.sort(allf, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    once = counts[inv.ravel()] == 1
    facets = allf[once]
    owners = owner[once]
    order = np.lexsort(np.sort(facets, axis=1).T[::-1])
    return facets[order], owners[order]


def build_interval_mesh(n: int, grading: Optional[Callable] = None) -> Mesh:
    """Mesh of (0, 1) with ``n`` cells and vertices at ``grading(i / n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.linspace(0.0, 1.0, n + 1)
    if grading is not None:
        x = np.array([float(grading(s)) for s in t])
        if abs(x[0]) > 1e-14 or abs(x[-1] - 1.0) > 1e-14 or np.any(np.diff(x) <= 0):
            raise ValueError("grading must be strictly increasing with g(0)=0, g(1)=1")
        x[0], x[-1] = 0.0, 1.0
    else:
        x = t
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], cells)


def _structured(xs, ys, split):
    """Triangulate the tensor grid; ``split(i, j)`` returns '/', '\\' or 'x'."""
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    verts = [np.column_stack([X.ravel(), Y.ravel()])]
    vid = lambda i, j: j * (nx + 1) + i
    cells = []
    extra = []
    nv = (nx + 1) * (ny + 1)
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            kind = split(i, j)
            if kind == "/":
                cells += [(a, b, c), (a, c, d)]
            elif kind == "\\":
                cells += [(a, b, d), (b, c, d)]
            elif kind == "x":
                e = nv + len(extra)
                extra.append(((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2))
                cells += [(a, b, e), (b, c, e), (c, d, e), (d, a, e)]
            else:
                raise ValueError(f"unknown split {kind!r}")
    if extra:
        verts.append(np.array(extra))
    return Mesh(np.vstack(verts), np.array(cells))


def _pattern_split(pattern):
    if pattern == "M1":
        return lambda i, j: "/"
    if pattern == "M2":
        # diagonals of each 2x2 block meet at the vertex with odd indices
        return lambda i, j: "/" if (i + j) % 2 == 0 else "\\"
    if pattern == "M3":
        return lambda i, j: "x"
    if pattern == "M4":
        return lambda i, j: "\\"
    raise ValueError(f"unknown mesh pattern {pattern!r}; expected one of {PATTERNS}")


def build_unit_square_mesh(pattern: str, n: int) -> Mesh:
    """Structured triangulation of the unit square with ``n`` squares per side.

    M1: every square cut along its (1, 1) diagonal.  M2: diagonals alternate
    in a checkerboard so that they meet at every vertex with odd indices.
    M3: criss-cross (centre vertex, four triangles per square).  M4: every
    square cut along its (1, -1) diagonal.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.linspace(0.0, 1.0, n + 1)
    return _structured(t, t, _pattern_split(pattern))


def _corner_grid(n):
    t = np.linspace(0.0, 1.0, n + 1)
    t[n - 1] = 1.0 - CORNER_SHIFT / n
    return t


def build_corner_modified_mesh(n: int) -> Mesh:
    """Mesh M2 with the last interior grid lines moved toward x = 1 and y = 1.

    The vertex closest to the corner (1, 1) then has boundary-touching patch
    area not exceeding its boundary-separated patch area.
    """
    if n < 2:
        raise ValueError("n must be >= 2 to have an interior vertex")
    t = _corner_grid(n)
    return _structured(t, t, _pattern_split("M2"))


def build_interior_layer_mesh(variant: str, n: int) -> Mesh:
    """Meshes for the interior-layer example with b = (2, 1).

    Variant A is the corner-modified mesh.  Variant B moves, in every grid
    column, the vertex closest to the line y = x/2 onto that line and picks
    the square diagonals so the moved vertices form a chain of edges.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if variant == "A":
        return build_corner_modified_mesh(n)
    if variant != "B":
        raise ValueError("variant must be 'A' or 'B'")
    t = _corner_grid(n)
    rows = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        cand = np.arange(1, n)
        rows[i] = cand[np.argmin(np.abs(t[cand] - t[i] / 2))]
    base = _pattern_split("M2")
    up = {(i, rows[i]) for i in range(n) if rows[i + 1] == rows[i] + 1}
    down = {(i, rows[i + 1]) for i in range(n) if rows[i + 1] == rows[i] - 1}

    def split(i, j):
        if (i, j) in up:
            return "/"
        if (i, j) in down:
            return "\\"
        return base(i, j)

    mesh = _structured(t, t, split)
    verts = mesh.vertices.copy()
    for i in range(1, n + 1):
        verts[rows[i] * (n + 1) + i, 1] = t[i] / 2
    out = Mesh(verts, mesh.cells)
    if np.any(out.cell_measures() <= 0):
        raise RuntimeError("interior-layer mesh construction produced inverted cells")
    return out


def classify_boundary(mesh: Mesh, b) -> Mesh:
    """Tag facets Inflow where b.n <= 0 at the facet midpoint, else Outflow."""
    mid = mesh.facet_midpoints()
    bv = np.asarray(b(mid) if callable(b) else np.broadcast_to(np.atleast_1d(np.asarray(b, float)), mid.shape), float)
    bv = bv.reshape(mid.shape)
    bn = np.einsum("fd,fd->f", bv, mesh.facet_normals())
    scale = max(np.abs(bv).max(), 1.0)
    tags = np.where(bn <= 1e-12 * scale, BoundaryTag.INFLOW, BoundaryTag.OUTFLOW)
    return mesh.with_tags(tags)


def patch_area_ratio(mesh: Mesh, vertex: int, boundary=None) -> float:
    """Area of patch cells touching the boundary over area of the other patch cells.

    ``boundary`` selects the boundary part: None for all of it, or a
    :class:`BoundaryTag` on a tagged mesh.
    """
    if vertex in set(mesh.boundary_vertices().tolist()):
        raise ValueError("patch_area_ratio needs an interior vertex")
    on_bdry = np.zeros(mesh.n_vertices, dtype=bool)
    on_bdry[mesh.boundary_vertices(boundary)] = True
    patch = np.nonzero((mesh.cells == vertex).any(axis=1))[0]
    area = mesh.cell_measures()[patch]
    touching = on_bdry[mesh.cells[patch]].any(axis=1)
    green = area[touching].sum()
    blue = area[~touching].sum()
    if blue == 0:
        return np.inf
    return green / blue


def nearest_interior_vertex(mesh: Mesh, point) -> int:
    interior = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_vertices())
    d = np.linalg.norm(mesh.vertices[interior] - np.asarray(point, float), axis=1)
    return int(interior[np.argmin(d)])


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split intervals in two and triangles in four; keeps the parent map."""
    verts = mesh.vertices
    if mesh.dim == 1:
        nv = len(verts)
        mids = verts[mesh.cells].mean(axis=1)
        m = nv + np.arange(mesh.n_cells)
        cells = np.empty((2 * mesh.n_cells, 2), dtype=np.int64)
        cells[0::2] = np.column_stack([mesh.cells[:, 0], m])
        cells[1::2] = np.column_stack([m, mesh.cells[:, 1]])
        parent = np.repeat(np.arange(mesh.n_cells), 2)
        return Mesh(np.vstack([verts, mids]), cells, mesh.boundary_facets, mesh.tags,
                    parent=parent, coarse=mesh)
    edges = mesh.edges()
    mid_id = {tuple(e): len(verts) + k for k, e in enumerate(edges.tolist())}
    mids = verts[edges].mean(axis=1)
    m = lambda a, b: mid_id[(a, b) if a < b else (b, a)]
    cells = []
    for a, b, c in mesh.cells.tolist():
        ab, bc, ca = m(a, b), m(b, c), m(c, a)
        cells += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    facets, tags = [], []
    for k, (a, b) in enumerate(mesh.boundary_facets.tolist()):
        facets += [(a, m(a, b)), (m(a, b), b)]
        if mesh.tags is not None:
            tags += [mesh.tags[k]] * 2
    parent = np.repeat(np.arange(mesh.n_cells), 4)
    return Mesh(np.vstack([verts, mids]), np.array(cells), np.array(facets),
                np.array(tags) if mesh.tags is not None else None, parent=parent, coarse=mesh)


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: ``dim nv nc nf`` header, vertices, cells, tagged facets."""
    tags = mesh.tags if mesh.tags is not None else -np.ones(len(mesh.boundary_facets), dtype=int)
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells} {len(mesh.boundary_facets)}\n")
        for v in mesh.vertices:
            fh.write(" ".join(f"{c:.17g}" for c in v) + "\n")
        for c in mesh.cells:
            fh.write(" ".join(str(i) for i in c) + "\n")
        for f, t in zip(mesh.boundary_facets, tags):
            fh.write(" ".join(str(i) for i in f) + f" {int(t)}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    dim, nv, nc, nf = map(int, lines[0])
    verts = np.array(lines[1:1 + nv], dtype=float).reshape(nv, dim)
    cells = np.array(lines[1 + nv:1 + nv + nc], dtype=np.int64)
    fl = np.array(lines[1 + nv + nc:1 + nv + nc + nf], dtype=np.int64).reshape(nf, dim + 1)
    tags = fl[:, -1]
    return Mesh(verts, cells, fl[:, :-1], None if np.all(tags < 0) else tags)
