# %% [markdown]
# # Mesh geometry decides whether the Gibbs overshoot disappears
#
# For the boundary layer of Ex. 2 the q -> 1 solution approaches the
# interpolant on Mesh 2 but not on the criss-cross Mesh 3.  A local
# criterion explains it: compare the area of cells at a vertex that touch
# the outflow boundary with those that do not.

# %%
from pgsolve.experiments import Case, run_case
from pgsolve.mesh import (build_corner_modified_mesh, build_unit_square_mesh, nearest_interior_vertex,
                          patch_area_ratio, write_mesh)

# on the criss-cross Mesh 3 the vertex nearest (1,1) is a cell centre whose
# whole patch touches the boundary, so its ratio is infinite
for m in ("M1", "M2", "M3", "M4"):
    mesh = build_unit_square_mesh(m, 8)
    print(m, "patch ratio at the corner vertex:", patch_area_ratio(mesh, nearest_interior_vertex(mesh, (1, 1))))
mc = build_corner_modified_mesh(8)
print("modified Mesh 2:", round(patch_area_ratio(mc, nearest_interior_vertex(mc, (1, 1))), 3))
write_mesh(mc, "corner_mesh.txt")

# %%
# Mesh 3 has four triangles per square and takes a few minutes
for m in ("M2", "M3"):
    over = {q: run_case(Case(example="ex2", epsilon=1e-6, mesh=m, n=8, p_n=1, delta_p=7, q=q))["max_over"]
            for q in (2.0, 1.01)}
    print(m, {q: round(v, 4) for q, v in over.items()})

# %% [markdown]
# With b = (2,1) the layer wraps around the corner (1,1) and Mesh 2 keeps
# an overshoot there; moving one grid line closer to the boundary fixes it.

# %%
for m in ("M2", "corner"):
    out = run_case(Case(example="ex3", epsilon=1e-6, b=(2.0, 1.0), mesh=m, n=8, p_n=1, delta_p=7, q=1.01))
    print(f"{m}: overshoot along y={out['line_y']:.3f}: {out['line_over']:.4f}")
