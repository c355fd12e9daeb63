# %% [markdown]
# # Convergence rates
#
# For the smooth Eriksson-Johnson solution (eps = 1) the errors decay at
# the usual polynomial rates.  For eps = 1e-4 the layer is unresolved and
# the L^q error goes like h^(1/q).

# %%
from pgsolve.experiments import Case, refinement_study

tab, _ = refinement_study(Case(example="ex2", epsilon=1.0, q=1.5, mesh="M1", p_n=1, delta_p=2), [4, 8, 16])
for h, dofs, el, ew, rl, rw in tab.rows():
    print(f"h={h:.4f} dofs={dofs:5d} L^q {el:.3e} ({rl:.2f})  W^1,q {ew:.3e} ({rw:.2f})")

# %%
for q in (2.0, 1.2):
    tab, _ = refinement_study(Case(example="ex2", epsilon=1e-4, q=q, mesh="M1", p_n=1, delta_p=2), [4, 8, 16, 32])
    print(f"q={q}: L^q eoc {[round(r, 3) for r in tab.eoc_lq[1:]]}, 1/q = {1 / q:.3f}")

# %%
tab.to_csv("convergence_q1.2.csv")
