# %% [markdown]
# # q = 2: one Newton step
#
# At q = 2 the duality map is linear, so the mixed system is a linear
# saddle point problem and Newton stops after a single step.  With equal
# trial and test spaces the method is plain Galerkin.

# %%
import numpy as np

from pgsolve.duality import TestNormConfig
from pgsolve.experiments import make_mesh, make_spaces
from pgsolve.fem import build_space
from pgsolve.problems import make_example
from pgsolve.solver import solve_mixed

prob = make_example("ex1", 1.0, bc_mode="strong")
mesh = make_mesh("interval", 16, prob.b)
U = build_space(mesh, 1, [("all", prob.g)])
V = build_space(mesh, 1, [("all", 0.0)])
sol = solve_mixed(prob, U, V, TestNormConfig(q=2.0, epsilon=1.0))
print("Newton iterations:", sol.newton_iterations)

x = U.nodes[:, 0]
order = np.argsort(x)
print("max nodal error vs exact:", np.abs(sol.u_n.coeffs - prob.exact(U.nodes))[order].max())

# %% [markdown]
# Enlarging the test space turns this into a minimum-residual method;
# still one step at q = 2, several at q = 1.5.

# %%
U, V = make_spaces(make_example("ex1", 0.01), mesh, 1, 3)
for q in (2.0, 1.5):
    s = solve_mixed(make_example("ex1", 0.01), U, V, TestNormConfig(q=q, epsilon=0.01))
    print(f"q={q}: {s.newton_iterations} Newton iterations, stages {s.stage_iterations}")
