# %% [markdown]
# # Running experiments from configuration files
#
# Everything above is also reachable through the ``pgsolve`` command.  A
# config lists case parameters; comma separated values become a sweep.

# %%
from pathlib import Path

from pgsolve.cli import RECIPES, main

Path("sweep.ini").write_text("""
[experiment]
example = ex1
epsilon = 1e-3
mesh = interval
n = 8
p_n = 1
delta_p = 4
q = 2, 1.5, 1.1
""")
print("exit code:", main(["run", "sweep.ini", "--out", "sweep_out"]))
print(Path("sweep_out/metrics.csv").read_text().splitlines()[0])

# %% [markdown]
# Named recipes reproduce the figure-level experiments; ``fig6`` is the
# quickest.  ``PGSOLVE_THREADS`` spreads sweep points over processes.

# %%
print(sorted(RECIPES))
main(["recipe", "fig6", "--out", "fig6_out"])
main(["mesh", "M2", "8", "--mesh-out", "mesh2.txt"])
