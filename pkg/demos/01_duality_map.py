# %% [markdown]
# # The L^q duality map
#
# J_q sends v to |v|^(q-1) sgn(v).  Its pairing with v recovers ||v||_q^q
# and its dual norm is ||v||_q^(q-1).  These two facts are what let the
# method trade the non-Hilbert residual norm for a smooth convex energy.

# %%
import numpy as np

from pgsolve.duality import DualityForm, TestNormConfig, dual_norm_identities_check, jq_pairing
from pgsolve.fem import FieldFunction, build_space, interpolate
from pgsolve.mesh import build_unit_square_mesh

V = build_space(build_unit_square_mesh("M2", 4), 2)
v = interpolate(V, lambda x: np.sin(3 * x[:, 0]) - x[:, 1])

for q in (1.01, 1.5, 2.0, 4.0):
    dual, primal = dual_norm_identities_check(v, q, order=20)
    print(f"q={q:<5} <J v, v> = {jq_pairing(v, v, q, order=20):.6f}   "
          f"||J v||_q' = {dual:.6f}   ||v||_q^(q-1) = {primal:.6f}")

# %% [markdown]
# The test norm adds a weighted gradient part.  DualityForm gives the
# residual (gradient of ||r||^q'/q') and its Jacobian; for q' = 2 the
# Jacobian is the constant Riesz matrix.

# %%
for q in (2.0, 1.2):
    cfg = TestNormConfig(q=q, epsilon=0.1, omega="one", b=(2.0, 1.0))
    form = DualityForm(V, cfg)
    r = np.random.default_rng(0).standard_normal(V.dim)
    H1, H2 = form.hessian(r), form.hessian(2 * r)
    print(f"q={q}: q'={cfg.q_dual:g}, Jacobian changes with state: {abs(H1 - H2).max() > 1e-12}")
