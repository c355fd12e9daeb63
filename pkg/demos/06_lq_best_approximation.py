# %% [markdown]
# # Comparing with the L^q best approximation
#
# lq_project computes the minimiser of ||u - target||_q over the trial
# space by Newton on a smoothed functional.  Its overshoot is a reference
# for what a q-norm method can achieve on a given mesh.  Near q = 1 the
# unsmoothed optimality certificate is below double precision resolution,
# hence ``certify=False`` there.

# %%
import numpy as np

from pgsolve.experiments import make_mesh
from pgsolve.fem import build_space, interpolate
from pgsolve.mesh import build_interval_mesh
from pgsolve.oracle import ProjectionProblem, lq_project, optimality_residual, overshoot_metrics
from pgsolve.problems import make_example

step = lambda x: (x[:, 0] > 0.5 + 1e-14).astype(float)
U = build_space(build_interval_mesh(8), 1)
for q in (3.0, 2.0, 1.5, 1.2, 1.1):
    u = lq_project(ProjectionProblem(U, step, q), order=8, certify=q >= 1.2)
    print(f"q={q}: overshoot above 1 = {u.coeffs.max() - 1:.4f}")

# %%
prob = make_example("ex2", 1e-6)
U = build_space(make_mesh("M2", 8, prob.b), 1, [("all", prob.g)])
ref = interpolate(U, prob.reference)
for q in (2.0, 1.5, 1.2):
    u = lq_project(ProjectionProblem(U, prob.exact, q))
    cert = np.abs(optimality_residual(u, prob.exact, q)).max()
    print(f"q={q}: max(u - interpolant) = {overshoot_metrics(u, ref)[0]:.4f}, certificate {cert:.1e}")
