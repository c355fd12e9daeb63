# %% [markdown]
# # Vanishing undershoot in one dimension
#
# -eps u'' + u' = 0 with u(0)=0, u(1)=1 has a layer of width eps at x=1.
# On 8 linear elements a q = 2 residual minimiser undershoots before the
# layer; letting q approach 1 removes most of it.  The solver reaches
# small q by continuation from q = 2.

# %%
from pgsolve.experiments import Case, run_case

for q in (2.0, 1.7, 1.4, 1.2, 1.1, 1.05, 1.01):
    out = run_case(Case(example="ex1", epsilon=1e-5, q=q, n=8, p_n=1, delta_p=9))
    print(f"q={q:<5} min u_n = {out['min_u']:+.4f}   Newton iterations {out['newton_iterations']}")

# %% [markdown]
# The size of the undershoot at q = 1.01 hardly depends on eps once the
# layer is unresolved.

# %%
for eps in (1e-3, 1e-5, 1e-7):
    out = run_case(Case(example="ex1", epsilon=eps, q=1.01, n=8, p_n=1, delta_p=9))
    print(f"eps={eps:g}: min u_n = {out['min_u']:+.4f}")
